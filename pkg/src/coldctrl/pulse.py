"""Control fields and their randomized-Fourier correction basis.

A control trajectory is a uniformly sampled, endpoint-pinned time series:
either the trap displacement (meters) for the chip experiment or the lattice
depth (recoil energies) for the Mott ramp.  Corrections to a guess pulse are
expanded in a truncated Fourier basis whose harmonics carry random offsets,
so independent optimization restarts explore different function spaces.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

DEFAULT_N_SAMPLES = 1024
CHIP_BANDWIDTH_HZ = 25e3  # drive electronics pass band
CHIP_DISPLACEMENT_MAX = 1e-6  # largest reachable trap displacement, meters


@dataclass(frozen=True)
class ControlField:
    """Uniformly sampled control trajectory on [0, T] with pinned endpoints."""

    times: np.ndarray
    values: np.ndarray
    start_value: float
    end_value: float
    unit: str = "dimensionless"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("times and values must be equal-length 1d arrays")
        dt = np.diff(t)
        if not np.all(dt > 0):
            raise ValueError("times must be strictly increasing")
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise ValueError("times must be uniformly spaced")
        if not (np.all(np.isfinite(v)) and np.isfinite(t[-1])):
            raise ValueError("control field contains non-finite samples")
        v = v.copy()
        v[0] = self.start_value
        v[-1] = self.end_value
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        self.times.setflags(write=False)
        self.values.setflags(write=False)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def n_samples(self) -> int:
        return self.times.size

    def __call__(self, t):
        """Cubic interpolation of the samples, clamped to the endpoints."""
        spline = getattr(self, "_spline", None)
        if spline is None:
            spline = CubicSpline(self.times, self.values, bc_type="natural")
            object.__setattr__(self, "_spline", spline)
        t = np.asarray(t, dtype=float)
        return spline(np.clip(t, self.times[0], self.times[-1]))

    def with_values(self, values: np.ndarray) -> "ControlField":
        return replace(self, values=np.asarray(values, dtype=float))

    def to_table(self) -> str:
        """Two-column text serialization, exact to the last float bit."""
        buf = io.StringIO()
        buf.write(f"# time_seconds value_{self.unit}\n")
        for t, v in zip(self.times, self.values):
            buf.write(f"{t:.17g} {v:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_table(cls, text: str) -> "ControlField":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("#"):
            raise ValueError("control table must start with a unit header line")
        unit = lines[0].split("value_", 1)[1].strip() if "value_" in lines[0] else "dimensionless"
        data = np.loadtxt(io.StringIO("\n".join(lines[1:])))
        data = np.atleast_2d(data)
        t, v = data[:, 0], data[:, 1]
        return cls(times=t, values=v, start_value=float(v[0]), end_value=float(v[-1]), unit=unit)


@dataclass(frozen=True)
class CrabParametrization:
    """Guess pulse plus a randomized truncated-Fourier correction.

    The correction multiplies the guess:

        field(t) = guess(t) * (1 + w(t) * sum_k [A_k sin(nu_k t) + B_k cos(nu_k t)])

    with nu_k = 2 pi (k + r_k) / T, r_k drawn uniformly from [-1/2, 1/2].
    The weight w(t) = sin^2(pi t / T) vanishes at both ends, which keeps the
    initial and final field values fixed without dividing by anything.
    """

    n_f: int
    guess: ControlField
    offsets: np.ndarray
    amplitudes_sin: np.ndarray
    amplitudes_cos: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.offsets, dtype=float)
        a = np.asarray(self.amplitudes_sin, dtype=float)
        b = np.asarray(self.amplitudes_cos, dtype=float)
        if not (len(r) == len(a) == len(b) == self.n_f):
            raise ValueError("offsets and coefficient arrays must have length n_f")
        if np.any(np.abs(r) > 0.5):
            raise ValueError("harmonic offsets must lie in [-1/2, 1/2]")
        object.__setattr__(self, "offsets", r)
        object.__setattr__(self, "amplitudes_sin", a)
        object.__setattr__(self, "amplitudes_cos", b)

    def frequencies(self, total_time: float) -> np.ndarray:
        """Angular frequencies nu_k = 2 pi (k + r_k) / T, k = 1..n_f."""
        k = np.arange(1, self.n_f + 1, dtype=float)
        return 2.0 * math.pi * (k + self.offsets) / total_time

    def coefficient_vector(self) -> np.ndarray:
        return np.concatenate([self.amplitudes_sin, self.amplitudes_cos])

    def with_coefficients(self, x: np.ndarray) -> "CrabParametrization":
        x = np.asarray(x, dtype=float)
        if x.size != 2 * self.n_f:
            raise ValueError(f"expected {2 * self.n_f} coefficients, got {x.size}")
        return replace(self, amplitudes_sin=x[: self.n_f], amplitudes_cos=x[self.n_f :])


@dataclass(frozen=True)
class SpectrumReport:
    """One-sided amplitude spectrum with peak annotations."""

    frequencies: np.ndarray  # Hz, nonnegative, sorted
    magnitudes: np.ndarray  # same units as the field samples
    peaks: list  # (frequency, magnitude, nearest_reference, detuning)
    reference_transitions: np.ndarray  # Hz

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        if np.any(f < 0) or np.any(np.diff(f) <= 0):
            raise ValueError("spectrum frequencies must be nonnegative and sorted")


def sample_basis(n_f: int, total_time: float, seed: int) -> CrabParametrization:
    """Draw a fresh randomized basis with zero correction coefficients.

    Deterministic for a fixed seed.  The guess defaults to the identity
    (constant 1) and is normally replaced via ``dataclasses.replace`` by the
    problem adapter.
    """
    if n_f < 1:
        raise ValueError("n_f must be at least 1")
    if total_time <= 0:
        raise ValueError("total_time must be positive")
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-0.5, 0.5, size=n_f)
    times = np.linspace(0.0, total_time, DEFAULT_N_SAMPLES)
    guess = ControlField(times, np.ones_like(times), 1.0, 1.0)
    zeros = np.zeros(n_f)
    return CrabParametrization(n_f, guess, offsets, zeros, zeros.copy())


def build_field(
    p: CrabParametrization, total_time: float, n_samples: int = DEFAULT_N_SAMPLES
) -> ControlField:
    """Evaluate guess * (1 + w * Fourier correction) on a uniform grid."""
    t = np.linspace(0.0, total_time, n_samples)
    g = p.guess(t)
    nu = p.frequencies(total_time)
    phase = np.outer(t, nu)
    corr = np.sin(phase) @ p.amplitudes_sin + np.cos(phase) @ p.amplitudes_cos
    w = np.sin(math.pi * t / total_time) ** 2
    v = g * (1.0 + w * corr)
    return ControlField(t, v, p.guess.start_value, p.guess.end_value, unit=p.guess.unit)


def _lowpass(values: np.ndarray, dt: float, bandwidth_max: float) -> np.ndarray:
    spec = np.fft.rfft(values)
    freqs = np.fft.rfftfreq(values.size, d=dt)
    spec[freqs > bandwidth_max] = 0.0
    return np.fft.irfft(spec, n=values.size)


def _repin(values: np.ndarray, start: float, end: float) -> np.ndarray:
    # remove the affine drift the filter introduced at the endpoints
    ramp = np.linspace(0.0, 1.0, values.size)
    return values + (start - values[0]) * (1.0 - ramp) + (end - values[-1]) * ramp


def project_constraints(
    f: ControlField,
    amp_max: float,
    bandwidth_max: float = CHIP_BANDWIDTH_HZ,
    amp_min: float | None = None,
    max_cycles: int = 4000,
    tol: float = 1e-15,
) -> ControlField:
    """Project a field onto the hardware-feasible set.

    Per cycle: hard spectral truncation above ``bandwidth_max``, affine
    endpoint re-pinning, then amplitude clipping.  The cycle repeats until a
    fixed point (all three constraint sets are convex, so the alternating
    projections converge), which makes the whole operation idempotent.
    """
    if bandwidth_max <= 0:
        raise ValueError("bandwidth_max must be positive")
    lo = -amp_max if amp_min is None else amp_min
    dt = f.times[1] - f.times[0]
    v = f.values.copy()
    scale = max(np.max(np.abs(v)), abs(amp_max), 1e-300)
    for _ in range(max_cycles):
        prev = v
        v = _lowpass(v, dt, bandwidth_max)
        v = _repin(v, f.start_value, f.end_value)
        v = np.clip(v, lo, amp_max)
        if np.max(np.abs(v - prev)) < tol * scale:
            break
    v[0] = min(max(f.start_value, lo), amp_max)
    v[-1] = min(max(f.end_value, lo), amp_max)
    return ControlField(f.times, v, float(v[0]), float(v[-1]), unit=f.unit)


def spectrum(
    f: ControlField,
    reference_transitions=(),
    peak_threshold: float = 0.05,
) -> SpectrumReport:
    """One-sided amplitude spectrum with local-maximum peak detection.

    Peaks are local maxima above ``peak_threshold`` times the largest
    nonzero-frequency magnitude; each is annotated with the nearest
    reference transition and its detuning (None when no references given).
    """
    if f.n_samples < 8:
        raise ValueError("need at least 8 samples for a meaningful spectrum")
    dt = f.times[1] - f.times[0]
    mags = np.abs(np.fft.rfft(f.values)) * (2.0 / f.n_samples)
    mags[0] /= 2.0
    freqs = np.fft.rfftfreq(f.n_samples, d=dt)
    refs = np.asarray(sorted(reference_transitions), dtype=float)

    peaks = []
    floor = peak_threshold * np.max(mags[1:]) if mags.size > 1 else 0.0
    for i in range(1, mags.size - 1):
        if mags[i] >= mags[i - 1] and mags[i] > mags[i + 1] and mags[i] >= floor:
            if refs.size:
                j = int(np.argmin(np.abs(refs - freqs[i])))
                peaks.append((freqs[i], mags[i], refs[j], freqs[i] - refs[j]))
            else:
                peaks.append((freqs[i], mags[i], None, None))
    return SpectrumReport(freqs, mags, peaks, refs)


def linear_ramp(v_start: float, v_end: float, total_time: float,
                n_samples: int = DEFAULT_N_SAMPLES, unit: str = "E_r") -> ControlField:
    if total_time <= 0:
        raise ValueError("total_time must be positive")
    t = np.linspace(0.0, total_time, n_samples)
    v = v_start + (v_end - v_start) * t / total_time
    return ControlField(t, v, v_start, v_end, unit=unit)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    # quintic: zero first and second derivatives at both ends
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def s_shaped_ramp(v_start: float, v_end: float, total_time: float, center: float,
                  n_samples: int = DEFAULT_N_SAMPLES, unit: str = "E_r") -> ControlField:
    """Two smoothstep segments meeting at the value ``center`` at t = T/2.

    The slope vanishes where the curve passes through ``center``, so a ramp
    through a critical depth spends its slowest motion there.  Monotone when
    ``center`` lies between the endpoints.
    """
    if total_time <= 0:
        raise ValueError("total_time must be positive")
    t = np.linspace(0.0, total_time, n_samples)
    v = np.empty_like(t)
    half = total_time / 2.0
    first = t <= half
    u1 = t[first] / half
    v[first] = v_start + (center - v_start) * _smoothstep(u1)
    u2 = (t[~first] - half) / half
    v[~first] = center + (v_end - center) * _smoothstep(u2)
    return ControlField(t, v, v_start, v_end, unit=unit)

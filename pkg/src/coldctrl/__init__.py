"""Optimal control of cold-atom dynamics.

Two drivable systems are covered: the motional state of a 1D condensate in a
displaced anharmonic chip trap (mean-field engine in :mod:`coldctrl.gpe`) and
a trapped Bose-Hubbard chain crossed from the superfluid to the Mott regime
by a lattice-depth ramp (:mod:`coldctrl.lattice`).  Control fields are built
and constrained in :mod:`coldctrl.pulse`, searched over in
:mod:`coldctrl.optimize`, and scanned against the total process duration in
:mod:`coldctrl.qsl`.
"""

__version__ = "0.1.0"

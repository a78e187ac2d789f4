"""Tools for the k-cut process on rooted complete binary trees.

The package is organised in layers:

- :mod:`kcut.specfun` -- scalar gamma-family kernels (regularized upper
  incomplete gamma and its inverse) used throughout.
- :mod:`kcut.series` -- exact rational power-series expansions that produce
  the coefficient tables feeding the moment asymptotics.
- :mod:`kcut.cutsim` -- simulators for the cutting process itself, for the
  equivalent record construction, and a brute-force distribution for tiny
  trees.
- :mod:`kcut.exactmean` -- exact (quadrature-based) and asymptotic moments
  of record counts.
- :mod:`kcut.limitdist` -- the infinitely divisible limit law: Levy density,
  tail, drift, characteristic function, CDF, and a fast approximate sampler.
- :mod:`kcut.harness` -- experiment drivers (subsequence selection,
  Kolmogorov-Smirnov statistics, CSV/JSON reporting).
- :mod:`kcut.cli` -- the ``kcut`` command-line entry point.
"""

from __future__ import annotations

__version__ = "0.1.0"

__all__ = ["__version__"]

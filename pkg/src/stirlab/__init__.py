"""Monte Carlo laboratory for Brownian-driven hard-ball "stirring" dynamics.

A point-like Brownian driver moves two unit balls on a flat d-torus (or in
R^d): the balls never move on their own, they are only pushed when the driver
touches their surface, and they reflect off each other.  The package provides

* a discretised path engine for the driver/ball system with boundary local
  times (:mod:`stirlab.engine`),
* exact auxiliary samplers for the sphere-to-sphere chains of reflected
  Brownian motion (:mod:`stirlab.oracles`),
* excursion decomposition and crossing-rate estimators
  (:mod:`stirlab.excursions`),
* walk-on-spheres harmonic-measure sampling (:mod:`stirlab.harmonic`),
* estimator and hypothesis-test machinery (:mod:`stirlab.stats`),
* a CLI with deterministic replica orchestration (:mod:`stirlab.cli`), and
* the statistical acceptance suite (:mod:`stirlab.acceptance`).
"""

__version__ = "0.1.0"

from .geometry import INFINITE, Space, displacement, outward_normal, unfold_step, wrap
from .clocks import LocalTimeLedger, sample_on_local_clock, sigma
from .stats import EstimatorResult

__all__ = [
    "INFINITE",
    "Space",
    "wrap",
    "displacement",
    "outward_normal",
    "unfold_step",
    "LocalTimeLedger",
    "sigma",
    "sample_on_local_clock",
    "EstimatorResult",
    "__version__",
]

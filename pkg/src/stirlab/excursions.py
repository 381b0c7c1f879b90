"""Excursion decomposition and excursion-law functionals.

An excursion is a maximal path segment of the frozen-mode driver away from a
ball surface; its law, normalised by the ``delta -> 0`` limit of scaled
hitting probabilities, assigns closed-form rates to shell crossings:

* ``crossing_rate(2, b) = 1 / log(b)``
* ``crossing_rate(d, b) = (d - 2) / (1 - b^(2-d))`` for ``d >= 3``
  (``d - 2`` at ``b = inf``).

Crossing excursions arrive as a Poisson process on the local-time scale, so
the local time to the first crossing is exponential with that rate -- the
basis of the integrator calibration tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine, kernels
from .geometry import Space
from .rng import kernel_seed
from .stats import EstimatorResult, ReferenceLaw, ks_test


@dataclass(frozen=True)
class ExcursionRecord:
    """One excursion of the driver from a ball surface."""

    start: np.ndarray
    end: np.ndarray
    zeta: float
    max_radius: float
    which_ball: str  # "X" or "Y": the ball the excursion departed from
    end_ball: str
    t_start: float


def records_from_array(exc: np.ndarray, dim: int) -> list[ExcursionRecord]:
    """Decode the kernel excursion rows into records."""
    names = ("X", "Y")
    out = []
    for row in exc:
        out.append(
            ExcursionRecord(
                start=row[:dim].copy(),
                end=row[dim : 2 * dim].copy(),
                zeta=float(row[2 * dim]),
                max_radius=float(row[2 * dim + 1]),
                which_ball=names[int(row[2 * dim + 2])],
                end_ball=names[int(row[2 * dim + 3])],
                t_start=float(row[2 * dim + 4]),
            )
        )
    return out


@dataclass(frozen=True)
class ExcursionLawEstimate:
    """Estimate of an excursion-law functional."""

    functional: str  # CROSS_b | LIFETIME | LAMBDA2_b
    value: float
    stderr: float
    delta_used: float = 0.0

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")


def crossing_rate(d: int, b: float) -> float:
    """Closed-form rate of shell-crossing excursions per unit local time."""
    if d < 2:
        raise ValueError("d must be >= 2")
    if b is not None and b != math.inf and b <= 1:
        raise ValueError("outer radius must exceed 1")
    if b == math.inf:
        if d == 2:
            raise ValueError("recurrent case has no infinite crossing rate")
        return float(d - 2)
    if d == 2:
        return 1.0 / math.log(b)
    return (d - 2) / (1.0 - b ** (2 - d))


def crossing_rate_mc(
    d: int,
    b: float,
    delta_list,
    n_paths: int,
    seed: int,
    eps: float = 1e-6,
) -> ExcursionLawEstimate:
    """Monte Carlo crossing rate by the scaled-hitting-probability limit.

    For each offset ``delta`` the walk-on-spheres engine estimates the
    probability that a path from radius ``1 + delta`` reaches ``b`` before
    returning to the unit sphere, divided by ``delta``; the two smallest
    offsets are Richardson-extrapolated linearly to ``delta = 0`` (the exact
    radial probability is smooth in ``delta``).
    """
    deltas = sorted(float(x) for x in delta_list)
    if len(deltas) < 2:
        raise ValueError("need at least two offsets")
    if deltas[-1] >= 0.1:
        raise ValueError("offsets must be below 0.1")
    ests, errs = [], []
    for i, delta in enumerate(deltas):
        hits = kernels.kernel_wos_shell(
            kernel_seed(seed, 17, i), d, float(b), 1.0 + delta, eps, int(n_paths), 100_000
        )
        if (hits < 0).any():
            raise RuntimeError("WOS stalled")
        p = hits.mean()
        ests.append(p / delta)
        errs.append(math.sqrt(p * (1 - p) / n_paths) / delta)
    d1, d2 = deltas[0], deltas[1]
    # linear extrapolation through the two smallest offsets
    w2 = d2 / (d2 - d1)
    w1 = 1.0 - w2  # note w1 = -d1/(d2-d1) applies to the larger offset
    value = w2 * ests[0] + w1 * ests[1]
    stderr = math.sqrt((w2 * errs[0]) ** 2 + (w1 * errs[1]) ** 2)
    return ExcursionLawEstimate("CROSS_b", float(value), float(stderr), delta_used=d1)


def scaled_crossing_probabilities(d, b, delta_list, n_paths, seed, eps=1e-6):
    """Per-offset estimates ``P(reach b before 1 from 1+delta) / delta``."""
    out = []
    for i, delta in enumerate(sorted(float(x) for x in delta_list)):
        hits = kernels.kernel_wos_shell(
            kernel_seed(seed, 19, i), d, float(b), 1.0 + delta, eps, int(n_paths), 100_000
        )
        p = hits.mean()
        out.append(
            (delta, float(p / delta), float(math.sqrt(p * (1 - p) / n_paths) / delta))
        )
    return out


def exact_scaled_crossing_probability(d: int, b: float, delta: float) -> float:
    """Analytic ``P(reach b before 1 from 1+delta)/delta`` for the shell."""
    if d == 2:
        return math.log(1.0 + delta) / math.log(b) / delta
    num = 1.0 - (1.0 + delta) ** (2 - d)
    return num / (1.0 - b ** (2 - d)) / delta


def second_moment_at_crossing(
    d: int, b: float, dt: float, n_paths: int, seed: int, adaptive: bool = True
) -> ExcursionLawEstimate:
    """Second moment of one vector-local-time component at the first crossing
    of radius ``b`` (frozen single ball, uniform sphere starts)."""
    samples = engine.vector_local_time_at_crossing(d, b, dt, n_paths, seed, adaptive)
    sq = samples**2
    return ExcursionLawEstimate(
        f"LAMBDA2_{b}",
        float(sq.mean()),
        float(sq.std(ddof=1) / math.sqrt(sq.size)),
        delta_used=dt,
    )


def shell_crossing_law(d: int, b: float, dt: float, n: int, seed: int) -> dict:
    """Sampled local time to the first crossing of radius ``b`` with its KS
    comparison against the exponential law of rate ``crossing_rate(d, b)``."""
    samples = engine.shell_crossing_samples(d, b, dt, n, seed)
    rate = crossing_rate(d, b)
    stat, p = ks_test(samples, ReferenceLaw.exponential(rate))
    return {
        "samples": samples,
        "mean": EstimatorResult(
            value=float(samples.mean()),
            stderr=float(samples.std(ddof=1) / math.sqrt(samples.size)),
            n=samples.size,
            label=f"mean local time to cross b={b}",
        ),
        "expected_mean": 1.0 / rate,
        "ks_stat": stat,
        "ks_p": p,
    }


def lifetime_per_local_time(
    space: Space,
    dt: float,
    t_end: float,
    seed: int,
    separation: float | None = None,
    min_crossings: int = 50,
) -> dict:
    """Frozen two-ball torus run: horizon over accumulated local time and the
    mean excursion lifetime, against the domain-volume prediction.

    The long-run local-time rate is (total sphere area)/(domain volume), so
    ``t / L_t`` approaches ``|D| / s_d`` where ``|D|`` is the torus volume
    minus the two unit balls and ``s_d`` the unit-sphere area.
    """
    if not space.finite:
        raise ValueError("needs a torus")
    d, r = space.dim, space.edge
    if separation is None:
        separation = r / 2.0
    if separation < r / 3.0:
        raise ValueError("ball separation must be at least r/3")
    x_c = np.full(d, r / 4.0)
    y_c = x_c.copy()
    y_c[0] += separation
    y_c %= r
    b0 = x_c.copy()
    b0[1] = (x_c[1] + r / 2.0) % r
    cfg = engine.SimConfig(space=space, dt=dt, t_end=t_end, seed=seed, mode=engine.Mode.FROZEN)
    init = engine.SystemState(
        t=0.0, B=b0, X=x_c, fB=b0.copy(), fX=x_c.copy(), Y=y_c, fY=y_c.copy(),
        vLX=np.zeros(d), vLY=np.zeros(d),
    )
    res = engine.run_path(cfg, init, ledger_stride=max(1, int(1.0 / dt)))
    L = res.final.LX + res.final.LY
    n_exc = 0 if res.excursions is None else res.excursions.shape[0]
    if n_exc < min_crossings:
        raise RuntimeError("underpowered: fewer than 50 excursions recorded")
    zetas = res.excursions[:, 2 * d]
    t_over_l = EstimatorResult(
        value=res.final.t / L,
        stderr=res.final.t / L / math.sqrt(n_exc),  # crude: one dof per excursion
        n=n_exc,
        label="t / L at horizon",
    )
    mean_life = EstimatorResult(
        value=float(zetas.mean()),
        stderr=float(zetas.std(ddof=1) / math.sqrt(n_exc)),
        n=n_exc,
        label="mean excursion lifetime",
    )
    expected = domain_volume(space) / sphere_area(d)
    return {
        "t_over_L": t_over_l,
        "mean_lifetime": mean_life,
        "expected_t_over_L": expected,
        "L_rate": L / res.final.t,
        "expected_L_rate": 1.0 / expected,
        "n_excursions": n_exc,
        "result": res,
    }


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def domain_volume(space: Space, n_balls: int = 2) -> float:
    """Torus volume minus the hard balls."""
    if not space.finite:
        raise ValueError("whole space has infinite volume")
    return space.edge**space.dim - n_balls * ball_volume(space.dim)


def tail_decay_rate(samples, q_low: float = 0.5, q_high: float = 0.98) -> tuple[float, float]:
    """Log-linear decay rate of the upper tail of ``|samples|``.

    Regresses ``log P(|x| > a)`` on ``a`` between the given quantiles;
    returns (rate, stderr).  A positive finite rate is the exponential-tail
    surrogate used where only a large-``b`` tail bound is available.
    """
    x = np.sort(np.abs(np.asarray(samples, dtype=np.float64)))
    n = x.size
    lo, hi = int(q_low * n), int(q_high * n)
    if hi - lo < 10:
        raise ValueError("too few tail points")
    a = x[lo:hi]
    surv = 1.0 - (np.arange(lo, hi) + 1) / n
    y = np.log(np.maximum(surv, 1e-300))
    A = np.vstack([a, np.ones_like(a)]).T
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    denom = np.sum((a - a.mean()) ** 2)
    stderr = float(np.sqrt(resid.var(ddof=2) / denom)) if denom > 0 else float("inf")
    return float(-coef[0]), stderr

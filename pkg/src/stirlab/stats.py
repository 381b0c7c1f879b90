"""Estimators and hypothesis tests backing the acceptance suite.

Everything here is pure aggregation over immutable sample arrays: moments
with batch-means standard errors, one- and two-sample Kolmogorov-Smirnov
tests, chi-square uniformity tests, diffusion-coefficient extraction from
local-clock increments, and the stationary-independence report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.stats


@dataclass(frozen=True)
class EstimatorResult:
    """Point estimate with standard error and sample count."""

    value: float
    stderr: float
    n: int
    label: str = ""

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")
        if self.n < 1:
            raise ValueError("sample count must be >= 1")

    def within(self, target: float, n_sigma: float = 3.0, atol: float = 0.0) -> bool:
        return abs(self.value - target) <= n_sigma * self.stderr + atol


@dataclass(frozen=True)
class ReferenceLaw:
    """Reference distribution for goodness-of-fit tests.

    ``kind`` is one of ``"exponential"`` (params: rate), ``"normal"``
    (params: mean, variance), ``"uniform_torus"`` (params: edge), or
    ``"empirical"`` (params: table of samples).
    """

    kind: str
    rate: float = 0.0
    mean: float = 0.0
    variance: float = 1.0
    edge: float = 1.0
    table: np.ndarray | None = field(default=None)

    @classmethod
    def exponential(cls, rate: float) -> "ReferenceLaw":
        if rate <= 0:
            raise ValueError("exponential rate must be positive")
        return cls(kind="exponential", rate=rate)

    @classmethod
    def normal(cls, mean_: float, variance: float) -> "ReferenceLaw":
        if variance <= 0:
            raise ValueError("normal variance must be positive")
        return cls(kind="normal", mean=mean_, variance=variance)

    @classmethod
    def uniform_torus(cls, edge: float) -> "ReferenceLaw":
        if edge <= 0:
            raise ValueError("torus edge must be positive")
        return cls(kind="uniform_torus", edge=edge)

    @classmethod
    def empirical(cls, table) -> "ReferenceLaw":
        table = np.sort(np.asarray(table, dtype=np.float64))
        if table.size == 0:
            raise ValueError("empirical table must be nonempty")
        return cls(kind="empirical", table=table)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "exponential":
            return np.where(x > 0, -np.expm1(-self.rate * x), 0.0)
        if self.kind == "normal":
            return scipy.stats.norm.cdf(x, loc=self.mean, scale=np.sqrt(self.variance))
        if self.kind == "uniform_torus":
            return np.clip(x / self.edge, 0.0, 1.0)
        if self.kind == "empirical":
            return np.searchsorted(self.table, x, side="right") / self.table.size
        raise ValueError(f"unknown reference law kind {self.kind!r}")


def ks_test(sample, law: ReferenceLaw) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value of ``sample`` against ``law``.

    Analytic laws use the one-sample statistic ``D = sup |F_emp - F|``;
    an ``empirical`` law uses the two-sample test, which is symmetric under
    swapping sample and table.
    """
    sample = np.asarray(sample, dtype=np.float64)
    if sample.size == 0:
        raise ValueError("empty sample")
    if law.kind == "empirical":
        res = scipy.stats.ks_2samp(sample, law.table, method="asymp")
        return float(res.statistic), float(res.pvalue)
    x = np.sort(sample)
    n = x.size
    cdf = law.cdf(x)
    d_plus = np.max(np.arange(1, n + 1) / n - cdf)
    d_minus = np.max(cdf - np.arange(0, n) / n)
    d = max(d_plus, d_minus)
    p = float(scipy.stats.kstwo.sf(d, n))
    return float(d), min(1.0, p)


def ks_2samp(a, b) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic p-value."""
    res = scipy.stats.ks_2samp(np.asarray(a), np.asarray(b), method="asymp")
    return float(res.statistic), float(res.pvalue)


def gaussian_ks(sample) -> tuple[float, float]:
    """KS test of a sample against the normal law with its own mean/variance."""
    sample = np.asarray(sample, dtype=np.float64)
    z = (sample - sample.mean()) / sample.std(ddof=1)
    return ks_test(z, ReferenceLaw.normal(0.0, 1.0))


def chi_square_uniform(counts) -> tuple[float, float]:
    """Chi-square statistic and p-value of bin counts against equal expecteds."""
    counts = np.asarray(counts, dtype=np.float64)
    stat, p = scipy.stats.chisquare(counts)
    return float(stat), float(p)


def batch_means(samples, n_batches: int = 16, label: str = "") -> EstimatorResult:
    """Mean with a batch-means standard error over contiguous batches.

    Contiguous batching keeps the stderr honest for serially correlated
    inputs; at least 16 batches are used whenever the sample allows it.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    k = min(n_batches, x.size)
    if k < 2:
        return EstimatorResult(value=float(x.mean()), stderr=0.0, n=x.size, label=label)
    usable = (x.size // k) * k
    means = x[:usable].reshape(k, -1).mean(axis=1)
    stderr = float(means.std(ddof=1) / np.sqrt(k))
    return EstimatorResult(value=float(x.mean()), stderr=stderr, n=x.size, label=label)


def _variance_slope_blocks(increments_sq_1, increments_sq_2, dtau: float, n_blocks: int):
    """Per-block slopes of variance versus lag from squared increments."""
    k = min(n_blocks, increments_sq_1.size, increments_sq_2.size)
    slopes = []
    for b in range(k):
        s1 = increments_sq_1[b::k].mean()
        s2 = increments_sq_2[b::k].mean()
        slopes.append((s2 - s1) / dtau)
    return np.array(slopes)


def diffusion_coefficient(
    positions,
    level_step: float,
    c_scale: float = 1.0,
    n_scale: float = 1.0,
    base_lag: int = 1,
    positions_other=None,
    n_blocks: int = 16,
) -> dict:
    """Diffusion report from positions sampled on an equispaced local-time grid.

    ``positions`` has shape ``(m, d)``; increments are scaled by
    ``c_scale / sqrt(n_scale)`` so a unit diffusion coefficient corresponds to
    variance ``lag * level_step / n_scale`` per component.  The slope is the
    two-lag ratio estimate ``(V(2k) - V(k)) / dtau`` per component, with a
    block standard error.  When a second trajectory is supplied, the full
    empirical covariance and correlation of the joint base-lag increments is
    included (cross blocks measure the dependence between the two).
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim != 2:
        raise ValueError("positions must be (m, d)")
    m, d = pos.shape
    k = int(base_lag)
    if m < 4 * k or (m - 2 * k) // max(1, 2 * k) < 2:
        raise ValueError("underpowered: need more local-clock samples")
    scale = c_scale / np.sqrt(n_scale)
    dtau = k * level_step / n_scale

    def lag_increments(p, lag):
        return scale * (p[lag:] - p[:-lag])[::lag]

    inc1 = lag_increments(pos, k)
    inc2 = lag_increments(pos, 2 * k)
    if inc1.shape[0] < 100:
        raise ValueError("underpowered: fewer than 100 increments")
    slopes = []
    for j in range(d):
        blocks = _variance_slope_blocks(inc1[:, j] ** 2, inc2[:, j] ** 2, dtau, n_blocks)
        slopes.append(
            EstimatorResult(
                value=float(blocks.mean()),
                stderr=float(blocks.std(ddof=1) / np.sqrt(blocks.size)),
                n=inc1.shape[0],
                label=f"variance slope, component {j}",
            )
        )
    report = {
        "slopes": slopes,
        "n_increments": int(inc1.shape[0]),
        "dtau": dtau,
        "lag_increments": inc1,
    }
    if positions_other is not None:
        other = np.asarray(positions_other, dtype=np.float64)
        inc1o = lag_increments(other, k)
        joint = np.hstack([inc1, inc1o])
        cov = np.cov(joint.T)
        corr = np.corrcoef(joint.T)
        cross = corr[:d, d:]
        report["covariance"] = cov
        report["correlation"] = corr
        report["cross_correlation"] = cross
        report["max_abs_cross_correlation"] = float(np.max(np.abs(cross)))
        report["cross_corr_stderr"] = float(1.0 / np.sqrt(inc1.shape[0]))
    return report


def torus_pair_distance(x, y, edge: float) -> np.ndarray:
    """Torus distance between paired points, vectorised over rows."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    d = np.abs(x - y) % edge
    d = np.minimum(d, edge - d)
    return np.sqrt((d**2).sum(axis=1))


def independent_uniform_distance_table(
    dim: int, edge: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Brute-force reference: torus distance of independent uniform pairs."""
    u = rng.uniform(0.0, edge, size=(n, dim))
    v = rng.uniform(0.0, edge, size=(n, dim))
    return torus_pair_distance(u, v, edge)


def marginal_uniformity(samples, edge: float, bins_per_axis: int = 4) -> tuple[float, float]:
    """Chi-square test of torus positions against uniformity on a grid."""
    s = np.asarray(samples, dtype=np.float64)
    d = s.shape[1]
    idx = np.clip((s / edge * bins_per_axis).astype(np.int64), 0, bins_per_axis - 1)
    flat = np.zeros(s.shape[0], dtype=np.int64)
    for j in range(d):
        flat = flat * bins_per_axis + idx[:, j]
    counts = np.bincount(flat, minlength=bins_per_axis**d)
    return chi_square_uniform(counts)


def stationary_independence(
    samples_x,
    samples_y,
    edge: float,
    reference_distance_table,
    sample_times=None,
    bins_per_axis: int = 4,
    marginal_thin: int = 1,
) -> dict:
    """Stationarity report for long-run ball positions.

    Checks (a) marginal uniformity of each ball on a ``bins_per_axis**d``
    grid (chi-square, applied to every ``marginal_thin``-th sample so the
    test sees near-independent draws), (b) the two-sample KS distance between
    the observed scaled ball separation and the independent-uniform
    reference, and (c) correlations of bounded periodic test functions of the
    two positions.  The separation drift versus time is logged but not gated.
    """
    X = np.asarray(samples_x, dtype=np.float64)
    Y = np.asarray(samples_y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2:
        raise ValueError("need matching (n, d) position samples")
    n = X.shape[0]
    if n < 50:
        raise ValueError("insufficient effective sample size")
    chi_x = marginal_uniformity(X[::marginal_thin], edge, bins_per_axis)
    chi_y = marginal_uniformity(Y[::marginal_thin], edge, bins_per_axis)

    dist = torus_pair_distance(X, Y, edge) / edge
    ref = np.asarray(reference_distance_table, dtype=np.float64) / edge
    ks_stat, ks_p = ks_2samp(dist, ref)

    # bounded test functions: first periodic mode per coordinate
    corr = []
    for j in range(X.shape[1]):
        fx = np.cos(2 * np.pi * X[:, j] / edge)
        gy = np.cos(2 * np.pi * Y[:, j] / edge)
        corr.append(float(np.corrcoef(fx, gy)[0, 1]))
    corr = np.array(corr)

    if sample_times is None:
        sample_times = np.arange(n, dtype=np.float64)
    tt = np.asarray(sample_times, dtype=np.float64)
    A = np.vstack([tt - tt.mean(), np.ones_like(tt)]).T
    coef, res, _, _ = np.linalg.lstsq(A, dist, rcond=None)
    resid = dist - A @ coef
    denom = np.sum((tt - tt.mean()) ** 2)
    drift_err = float(np.sqrt(resid.var(ddof=2) / denom)) if denom > 0 else float("inf")

    return {
        "marginal_chi2_x": chi_x,
        "marginal_chi2_y": chi_y,
        "distance_ks_stat": ks_stat,
        "distance_ks_p": ks_p,
        "test_function_corr": corr,
        "max_abs_test_corr": float(np.max(np.abs(corr))),
        "test_corr_stderr": float(1.0 / np.sqrt(n)),
        "separation_drift_per_time": float(coef[0]),
        "separation_drift_stderr": drift_err,
        "n_samples": n,
    }


def contact_split(episode_ball_ids) -> tuple[EstimatorResult, float]:
    """Fraction of driver-ball contact episodes belonging to the first ball.

    One count per excursion episode, not per step.  Returns the fraction with
    binomial standard error and the two-sided binomial p-value against 1/2.
    """
    ids = np.asarray(episode_ball_ids)
    n = ids.size
    if n == 0:
        raise ValueError("no contact episodes recorded")
    k = int(np.sum(ids == 0))
    frac = k / n
    stderr = float(np.sqrt(max(frac * (1 - frac), 1e-12) / n))
    p = float(scipy.stats.binomtest(k, n, 0.5).pvalue)
    return EstimatorResult(value=frac, stderr=stderr, n=n, label="contact split"), p

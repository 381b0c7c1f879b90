"""Walk-on-spheres hitting sampler and harmonic-measure checks.

Brownian hitting locations on sphere-complement domains (one or two unit
balls, on a torus or in R^d) are sampled by successive maximal-ball jumps:
the exit location of Brownian motion from a ball centered at its start is
exactly uniform on that ball's sphere, so the walk needs no time
discretisation.  On a torus the jump radius is capped at a quarter edge so
the jump ball is isometric to a Euclidean ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.special

from . import kernels
from .geometry import Space, displacement
from .rng import kernel_seed, spawn_generator
from .stats import EstimatorResult


@dataclass(frozen=True)
class Obstacles:
    """One or two fixed unit balls."""

    centers: np.ndarray
    space: Space

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        object.__setattr__(self, "centers", centers)
        if centers.shape[1] != self.space.dim:
            raise ValueError("obstacle centers must match the space dimension")
        if centers.shape[0] == 2:
            gap = np.linalg.norm(displacement(centers[0], centers[1], self.space))
            if gap < 2.0:
                raise ValueError("obstacles overlap")

    @property
    def n(self) -> int:
        return self.centers.shape[0]


def _jump_cap(space: Space) -> float:
    return space.edge / 4.0 if space.finite else 1e300


def wos_hit_batch(
    start,
    obs: Obstacles,
    eps: float,
    n_paths: int,
    seed: int,
    replica: int = 0,
    max_jumps: int = 1_000_000,
):
    """Batch hitting samples: (obstacle ids, cosines to the start direction,
    hit points).  Raises if any walker exhausts its jump budget."""
    start = np.asarray(start, dtype=np.float64)
    r = obs.space.edge if obs.space.finite else 0.0
    for c in obs.centers:
        if np.linalg.norm(displacement(c, start, obs.space)) <= 1.0 + eps:
            raise ValueError("start must lie outside every obstacle by more than eps")
    hit, cosang, points = kernels.kernel_wos_two_balls(
        kernel_seed(seed, replica, 23),
        r,
        obs.centers,
        start,
        float(eps),
        _jump_cap(obs.space),
        int(n_paths),
        int(max_jumps),
    )
    if (hit < 0).any():
        raise RuntimeError("WOS stalled: jump budget exceeded")
    return hit, cosang, points


def wos_hit(start, obs: Obstacles, eps: float, seed: int):
    """One hitting sample: (obstacle id, hit point on that obstacle)."""
    hit, _, points = wos_hit_batch(start, obs, eps, 1, seed)
    return int(hit[0]), points[0]


def hitting_ratio(
    z, x1, y1, b: float, space: Space, n: int, seed: int
) -> EstimatorResult:
    """Ratio of harmonic measures of the two ball surfaces from base point
    ``z`` on one of the radius-``b`` spheres, with binomial standard error.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    gap = np.linalg.norm(displacement(x1, y1, space))
    if gap <= 2.0 * b:
        raise ValueError("centers must be more than 2b apart")
    if space.finite and not space.edge > 8.0 * b:
        raise ValueError("torus edge must exceed 8b")
    dzx = np.linalg.norm(displacement(x1, z, space))
    dzy = np.linalg.norm(displacement(y1, z, space))
    if not (abs(dzx - b) < 1e-6 or abs(dzy - b) < 1e-6):
        raise ValueError("base point must lie on one of the radius-b spheres")
    obs = Obstacles(centers=np.vstack([x1, y1]), space=space)
    hit, _, _ = wos_hit_batch(z, obs, 1e-4, n, seed)
    nx = int((hit == 0).sum())
    ny = n - nx
    if ny == 0:
        raise RuntimeError("no hits on the second obstacle")
    ratio = nx / ny
    p = nx / n
    stderr = math.sqrt(p * (1 - p) / n) / (1 - p) ** 2  # delta method on p/(1-p)
    return EstimatorResult(value=ratio, stderr=stderr, n=n, label=f"hit ratio at b={b}")


def _cos_bin_expected(d: int, edges: np.ndarray) -> np.ndarray:
    """Uniform-sphere masses of cosine bins: the cosine of the polar angle
    has density proportional to ``(1 - u^2)^((d-3)/2)`` on [-1, 1]."""
    if d == 3:
        return np.diff(edges) / 2.0
    a = (d - 1) / 2.0

    def cdf(u):
        # regularised incomplete beta of (1+u)/2 with parameters (a, a)
        return scipy.special.betainc(a, a, (1.0 + u) / 2.0)

    return np.diff([cdf(e) for e in edges])


def exit_uniformity(
    z, x1, y1, b: float, space: Space, n: int, seed: int, n_bins: int = 20
) -> dict:
    """Total-variation distance between the normalised hit distribution on
    the first obstacle and the uniform surface law, binned by the cosine of
    the angle to the start direction.

    Returns the raw binned TV, a noise-debiased value (the multinomial noise
    floor of the TV statistic is subtracted), a delta-method standard error,
    and the histogram.  Requires at least 20 expected hits per bin.
    """
    if b < 4.0:
        raise ValueError("needs b >= 4")
    x1 = np.asarray(x1, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    gap = np.linalg.norm(displacement(x1, y1, space))
    if gap <= 2.0 * b:
        raise ValueError("centers must be more than 2b apart")
    if space.finite and not space.edge > 8.0 * b:
        raise ValueError("torus edge must exceed 8b")
    obs = Obstacles(centers=np.vstack([x1, y1]), space=space)
    hit, cosang, _ = wos_hit_batch(z, obs, 1e-4, n, seed)
    cos_x = cosang[hit == 0]
    nx = cos_x.size
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    expected = _cos_bin_expected(space.dim, edges)
    if nx * expected.min() < 20:
        raise ValueError("underpowered: fewer than 20 expected hits per bin")
    counts, _ = np.histogram(cos_x, bins=edges)
    p_hat = counts / nx
    tv_raw = 0.5 * float(np.abs(p_hat - expected).sum())
    # multinomial noise floor: E|p_hat - q| ~ sqrt(2 q (1-q) / (pi n)) per bin
    floor = 0.5 * float(
        np.sum(np.sqrt(2.0 * expected * (1.0 - expected) / (math.pi * nx)))
    )
    tv_debiased = max(0.0, tv_raw - floor)
    stderr = 0.5 * math.sqrt(
        (1.0 - 2.0 / math.pi) * float((expected * (1.0 - expected)).sum()) / nx
    )
    est = EstimatorResult(value=tv_raw, stderr=stderr, n=nx, label=f"TV at b={b}")
    return {
        "tv_raw": tv_raw,
        "tv_debiased": tv_debiased,
        "noise_floor": floor,
        "estimate": est,
        "counts": counts,
        "edges": edges,
        "expected": expected,
        "n_hits": nx,
    }


def poisson_kernel_2d(z_angle: float, t: float) -> float:
    """Harmonic-measure density on the unit circle seen from ``exp(-t)``,
    relative to the uniform circle measure:
    ``(1 - e^(-2t)) / |z - (e^(-t), 0)|^2`` at ``z = (cos a, sin a)``."""
    if t <= 0:
        raise ValueError("t must be positive")
    rho = math.exp(-t)
    denom = 1.0 - 2.0 * rho * math.cos(z_angle) + rho * rho
    return (1.0 - rho * rho) / denom


def poisson_kernel_2d_moment(t: float, func=np.cos) -> float:
    """Quadrature of a test function against the circle harmonic measure."""
    val, _ = scipy.integrate.quad(
        lambda a: func(a) * poisson_kernel_2d(a, t) / (2.0 * math.pi),
        -math.pi,
        math.pi,
        limit=200,
    )
    return val


def sphere_first_coord_sq_exact(d: int) -> float:
    """Exact mean of the squared first coordinate on the uniform sphere: 1/d."""
    if d < 2:
        raise ValueError("d must be >= 2")
    return 1.0 / d


def sphere_moment_check(d: int, n: int = 10_000_000, seed: int = 0) -> EstimatorResult:
    """Monte Carlo mean of the squared first coordinate over the uniform
    sphere (must approach 1/d)."""
    rng = spawn_generator(seed, 29, d)
    total = 0.0
    total_sq = 0.0
    chunk = 1_000_000
    done = 0
    while done < n:
        m = min(chunk, n - done)
        g = rng.standard_normal((m, d))
        x = (g[:, 0] ** 2) / (g**2).sum(axis=1)
        total += x.sum()
        total_sq += (x**2).sum()
        done += m
    mean = total / n
    var = total_sq / n - mean**2
    return EstimatorResult(
        value=float(mean),
        stderr=float(math.sqrt(max(var, 0.0) / n)),
        n=n,
        label=f"sphere second moment, d={d}",
    )

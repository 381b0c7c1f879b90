"""Exact sphere-to-sphere samplers used to verify closed forms and to
calibrate the discretised integrator.

Sampled on its inverse-local-time clock, the reflected planar driver visits
the unit circle with independent wrapped-Cauchy increments: a local-time
increment ``delta`` moves the angle by a wrapped Cauchy variable of scale
``delta`` (equivalently, harmonic measure seen from radius ``exp(-delta)``).
In dimension ``d >= 3`` the corresponding chain is defective -- it dies at
rate ``d - 2`` per unit local time -- and, conditioned on survival, steps by
the unit-ball harmonic measure seen from ``exp(-delta) * v``.

A pathwise coupling realises the reflected process outside the unit sphere as
a rescaled free Brownian path: the reflected position is the path divided by
the running minimum radius (on a time change), and the boundary local time is
``-log`` of that minimum.  This gives a discretisation-bias-free reference
for the integrator's local-time normalisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .rng import kernel_seed, spawn_generator
from .stats import EstimatorResult


# ---------------------------------------------------------------------------
# planar chain (wrapped Cauchy)
# ---------------------------------------------------------------------------


def wrapped_cauchy_steps(delta: float, size, rng: np.random.Generator) -> np.ndarray:
    """Exact wrapped-Cauchy angle increments of scale ``delta``.

    Inverse-CDF construction: wrap a Cauchy variable of scale ``delta``.
    The circular density is proportional to ``(1 - rho^2) / |z - (rho, 0)|^2``
    with ``rho = exp(-delta)``.
    """
    if delta <= 0:
        raise ValueError("local-time increment must be positive")
    u = rng.random(size)
    return np.mod(delta * np.tan(np.pi * (u - 0.5)), 2.0 * np.pi)


def chain2d_step(theta: float, delta: float, rng: np.random.Generator) -> float:
    """One inverse-local-time step of the planar circle chain."""
    return float((theta + wrapped_cauchy_steps(delta, (), rng)) % (2.0 * np.pi))


def planar_vector_local_time_sq(
    u: float, n_paths: int, delta: float, seed: int, replica: int = 0
) -> EstimatorResult:
    """Second moment of one vector-local-time component at local time ``u``.

    Integrates ``cos(theta)`` along the circle chain with a left Riemann sum
    of step ``delta``, starting from a uniform angle, squares and averages.
    The continuum value is ``u + exp(-u) - 1``.
    """
    n_steps = int(round(u / delta))
    if n_steps < 1:
        raise ValueError("u must contain at least one step of size delta")
    rng = spawn_generator(seed, replica)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n_paths)
    acc = np.zeros(n_paths)
    for _ in range(n_steps):
        acc += np.cos(theta) * delta
        theta = np.mod(theta + wrapped_cauchy_steps(delta, n_paths, rng), 2.0 * np.pi)
    sq = acc**2
    return EstimatorResult(
        value=float(sq.mean()),
        stderr=float(sq.std(ddof=1) / math.sqrt(n_paths)),
        n=n_paths,
        label=f"E(L1)^2 at u={u}, delta={delta}",
    )


# ---------------------------------------------------------------------------
# unit-ball harmonic measure samplers
# ---------------------------------------------------------------------------


def ball_hit_cosine_3d(rho: float, size, rng: np.random.Generator) -> np.ndarray:
    """Cosine of the exit angle for Brownian motion in the 3-ball started at
    ``rho * e1``, by closed-form inverse CDF of the hitting density.

    The density in ``u = cos(angle)`` is proportional to
    ``(1 + rho^2 - 2 rho u)^(-3/2)``.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError("base radius must lie in [0, 1)")
    v = rng.random(size)
    if rho == 0.0:
        return 2.0 * v - 1.0
    a = 1.0 + rho * rho
    w = 1.0 / (1.0 + rho) + v * (1.0 / (1.0 - rho) - 1.0 / (1.0 + rho))
    u = (a - w**-2) / (2.0 * rho)
    return np.clip(u, -1.0, 1.0)


def _orthonormal_noise(v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform unit vectors orthogonal to each row of ``v``."""
    g = rng.standard_normal(v.shape)
    g -= (g * v).sum(axis=1, keepdims=True) * v
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero projection has probability zero; regenerate defensively
    bad = norms[:, 0] < 1e-12
    while bad.any():
        g[bad] = rng.standard_normal((int(bad.sum()), v.shape[1]))
        g[bad] -= (g[bad] * v[bad]).sum(axis=1, keepdims=True) * v[bad]
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        bad = norms[:, 0] < 1e-12
    return g / norms


def ball_exit_sample(d: int, rho: float, directions: np.ndarray, rng: np.random.Generator,
                     seed: int | None = None) -> np.ndarray:
    """Exit points on the unit sphere for Brownian motion started at
    ``rho * directions[i]`` inside the unit ball, one sample per row.

    d=3 uses the closed-form inverse CDF of the polar cosine; higher
    dimensions walk on concentric spheres (exact sphere-exit law, absorbed
    within 1e-9 of the boundary).
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    n = directions.shape[0]
    if d == 3:
        u = ball_hit_cosine_3d(rho, n, rng)
        w = _orthonormal_noise(directions, rng)
        return u[:, None] * directions + np.sqrt(np.maximum(0.0, 1.0 - u**2))[:, None] * w
    base = np.zeros(d)
    base[0] = rho
    ks = kernel_seed(seed if seed is not None else int(rng.integers(2**62)), 91, n)
    canon = kernels.kernel_ball_interior_hit(ks, d, base, n, 1e-9)
    # Householder reflection e1 -> direction maps the canonical frame over;
    # the exit law is mirror symmetric, so a reflection is admissible
    out = np.empty((n, d))
    e1 = np.zeros(d)
    e1[0] = 1.0
    for i in range(n):
        v = directions[i]
        w = e1 - v
        nw = w @ w
        if nw < 1e-24:
            out[i] = canon[i]
        else:
            out[i] = canon[i] - 2.0 * (w @ canon[i]) / nw * w
    return out


# ---------------------------------------------------------------------------
# defective chain in d >= 3
# ---------------------------------------------------------------------------


@dataclass
class SphereChainState:
    """Position on the unit sphere at an inverse-local-time instant."""

    v: np.ndarray
    ell: float = 0.0
    alive: bool = True


def kelvin_chain_step(
    state: SphereChainState, delta: float, rng: np.random.Generator, d: int
) -> SphereChainState:
    """One defective step: die with probability ``1 - exp(-(d-2) delta)``,
    otherwise move by the unit-ball hitting law seen from
    ``exp(-delta) * v``."""
    if d < 3:
        raise ValueError("the defective chain needs d >= 3")
    if not state.alive:
        return state
    if rng.random() > math.exp(-(d - 2) * delta):
        return SphereChainState(v=state.v, ell=state.ell, alive=False)
    new_v = ball_exit_sample(d, math.exp(-delta), state.v[None, :], rng)[0]
    new_v /= np.linalg.norm(new_v)
    return SphereChainState(v=new_v, ell=state.ell + delta, alive=True)


def kelvin_tail_second_moment(
    d: int, delta: float, n_paths: int, seed: int, replica: int = 0
) -> EstimatorResult:
    """Second moment of one component of the total vector local time,
    estimated along the defective chain with Riemann step ``delta``.

    Continuum limit: ``2 / ((d-2)(d-1)d)`` (uniform sphere start).
    """
    if d < 3:
        raise ValueError("needs d >= 3")
    rng = spawn_generator(seed, replica, 3)
    v = rng.standard_normal((n_paths, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    acc = np.zeros(n_paths)
    alive = np.ones(n_paths, dtype=bool)
    rho = math.exp(-delta)
    p_survive = math.exp(-(d - 2) * delta)
    rounds = 0
    while alive.any():
        rounds += 1
        idx = np.flatnonzero(alive)
        acc[idx] += delta * v[idx, 0]
        survive = rng.random(idx.size) <= p_survive
        alive[idx[~survive]] = False
        live = idx[survive]
        if live.size:
            v[live] = ball_exit_sample(
                d, rho, v[live], rng, seed=(seed * 1000003 + rounds) % (2**61)
            )
            v[live] /= np.linalg.norm(v[live], axis=1, keepdims=True)
    sq = acc**2
    return EstimatorResult(
        value=float(sq.mean()),
        stderr=float(sq.std(ddof=1) / math.sqrt(n_paths)),
        n=n_paths,
        label=f"E(L1_inf)^2, d={d}, delta={delta}",
    )


def kelvin_limit_second_moment(d: int) -> float:
    """Closed-form limit ``2 / ((d-2)(d-1)d)`` of the total second moment."""
    if d < 3:
        raise ValueError("needs d >= 3")
    return 2.0 / ((d - 2) * (d - 1) * d)


def richardson_extrapolate(deltas, values, stderrs):
    """Polynomial-in-delta extrapolation to zero with error propagation.

    Fits the unique degree ``len(deltas)-1`` polynomial through the points
    and evaluates at 0; estimates from different levels must be independent.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    stderrs = np.asarray(stderrs, dtype=np.float64)
    k = deltas.size
    weights = np.empty(k)
    for i in range(k):
        w = 1.0
        for j in range(k):
            if j != i:
                w *= (0.0 - deltas[j]) / (deltas[i] - deltas[j])
        weights[i] = w
    value = float(weights @ values)
    stderr = float(np.sqrt((weights**2) @ (stderrs**2)))
    return value, stderr


# ---------------------------------------------------------------------------
# scaling coupling (free path / running minimum)
# ---------------------------------------------------------------------------


@dataclass
class CouplingState:
    """One trace row of the coupling path."""

    t: float
    radius: float
    m_running: float
    c_clock: float
    local_time: float
    u: np.ndarray = field(default_factory=lambda: np.zeros(0))


def scaling_coupling_samples(
    d: int,
    dt: float,
    n_paths: int,
    seed: int,
    stop_radius_floor: float = math.exp(-10.0),
    r_out: float = 100.0,
    record_level: float = 1.0,
    replica: int = 0,
) -> dict:
    """Total local times ``-log(min radius)`` for free paths started at e1,
    plus the driver direction's first coordinate when the minimum first
    reaches ``exp(-record_level)``.

    ``stop_radius_floor`` censors the negligible upper tail; paths stop once
    they exit radius ``r_out``, beyond which further minima have probability
    below ``1/r_out``.
    """
    if d < 3:
        raise ValueError("the coupling total local time is finite only for d >= 3")
    floor_level = -math.log(stop_radius_floor)
    max_steps = int(min(4e8, 4000.0 / dt))
    l_inf, at_level, reached = kernels.kernel_coupling_batch(
        kernel_seed(seed, replica, 7),
        d,
        float(dt),
        int(n_paths),
        floor_level,
        float(r_out),
        float(record_level),
        max_steps,
    )
    return {
        "total_local_time": l_inf,
        "first_coord_at_level": at_level[reached.astype(bool)],
        "level_yield": float(reached.mean()),
    }


def scaling_coupling_trace(
    d: int,
    dt: float,
    seed: int,
    stop_radius_floor: float = math.exp(-10.0),
    r_out: float = 100.0,
    stride: int = 16,
    max_rows: int = 200_000,
) -> list[CouplingState]:
    """Stride-sampled trace of one coupling path (driver radius, running
    minimum, time change, local time, coupled position)."""
    floor_level = -math.log(stop_radius_floor)
    rows = kernels.kernel_coupling_trace(
        kernel_seed(seed, 11),
        d,
        float(dt),
        floor_level,
        float(r_out),
        int(stride),
        int(max_rows),
        int(min(2e8, 100.0 * r_out**2 / dt)),
    )
    return [
        CouplingState(
            t=float(p[0]),
            radius=float(p[1]),
            m_running=float(p[2]),
            c_clock=float(p[3]),
            local_time=float(p[4]),
            u=p[5:].copy(),
        )
        for p in rows
    ]

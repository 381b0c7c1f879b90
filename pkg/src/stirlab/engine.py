"""Discretised path engine for the driver/ball system.

Two modes share one state layout:

* ``PUSHING`` -- the driver ``B`` is free Brownian motion; each ball is moved
  along the driver-ball center line whenever the driver lands inside it, so
  they just touch, and the moved ball transmits any overlap to its partner
  along their center line.  The penetration depth of each driver push is the
  boundary local-time increment of that ball, and the push direction times
  the depth accumulates into the ball's vector local time.
* ``FROZEN`` -- the balls are fixed and the driver itself is projected out of
  them (the reflected process); projection magnitudes accumulate into the
  per-ball local times.

One path is strictly sequential and bit-reproducible from ``(seed, config,
initial state)``.  :func:`step` and :func:`resolve_contacts` are the plain
Python reference used in tests; :func:`run_path` delegates to the compiled
kernels.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .clocks import LocalTimeLedger
from .geometry import Space, displacement, wrap
from .rng import kernel_seed, spawn_generator


class Mode(enum.Enum):
    PUSHING = "pushing"
    FROZEN = "frozen"


@dataclass(frozen=True)
class SimConfig:
    """Run parameters; ``dt`` must stay below 0.01 so single steps are short
    relative to both the ball radius and half the torus edge."""

    space: Space
    dt: float
    t_end: float
    seed: int
    mode: Mode = Mode.PUSHING
    tol_overlap: float = 1e-9
    max_contact_iters: int = 64

    def __post_init__(self):
        if not 0.0 < self.dt < 0.01:
            raise ValueError("dt must lie in (0, 0.01)")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.max_contact_iters < 8:
            raise ValueError("max_contact_iters must be >= 8")
        if self.tol_overlap <= 0:
            raise ValueError("tol_overlap must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class SystemState:
    """Positions (torus and unfolded), local times, and wall-clock time.

    ``Y`` and its companions are ``None`` in single-ball runs.
    """

    t: float
    B: np.ndarray
    X: np.ndarray
    fB: np.ndarray
    fX: np.ndarray
    LX: float = 0.0
    vLX: np.ndarray | None = None
    Y: np.ndarray | None = None
    fY: np.ndarray | None = None
    LY: float = 0.0
    vLY: np.ndarray | None = None

    @property
    def n_balls(self) -> int:
        return 1 if self.Y is None else 2

    def copy(self) -> "SystemState":
        return SystemState(
            t=self.t,
            B=self.B.copy(),
            X=self.X.copy(),
            fB=self.fB.copy(),
            fX=self.fX.copy(),
            LX=self.LX,
            vLX=None if self.vLX is None else self.vLX.copy(),
            Y=None if self.Y is None else self.Y.copy(),
            fY=None if self.fY is None else self.fY.copy(),
            LY=self.LY,
            vLY=None if self.vLY is None else self.vLY.copy(),
        )


@dataclass(frozen=True)
class StepReport:
    """Per-step contact summary: driver-push local-time increments, counts of
    ball displacements, and whether both balls were inside the driver's reach
    in the same step."""

    dLX: float = 0.0
    dLY: float = 0.0
    pushesX: int = 0
    pushesY: int = 0
    double_contact: bool = False


def _dist(a, b, space: Space) -> float:
    return float(np.linalg.norm(displacement(a, b, space)))


def _canon(p, space: Space) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return wrap(p, space) if space.finite else p


def initial_state(cfg: SimConfig, n_balls: int = 2) -> SystemState:
    """Well-separated default initial configuration."""
    d = cfg.space.dim
    r = cfg.space.edge if cfg.space.finite else 8.0
    B = np.zeros(d)
    X = np.zeros(d)
    X[0] = r / 4.0
    state = SystemState(t=0.0, B=B, X=X, fB=B.copy(), fX=X.copy(), vLX=np.zeros(d))
    if n_balls == 2:
        Y = np.zeros(d)
        Y[0] = -r / 4.0 if not cfg.space.finite else 3.0 * r / 4.0
        Y = _canon(Y, cfg.space)
        state.Y = Y
        state.fY = Y.copy()
        state.vLY = np.zeros(d)
    return state


def check_state(state: SystemState, cfg: SimConfig) -> None:
    """Assert the hard-sphere constraints within the overlap tolerance."""
    tol = cfg.tol_overlap
    if _dist(state.B, state.X, cfg.space) < 1.0 - tol:
        raise AssertionError("driver overlaps the first ball")
    if state.Y is not None:
        if _dist(state.B, state.Y, cfg.space) < 1.0 - tol:
            raise AssertionError("driver overlaps the second ball")
        if _dist(state.X, state.Y, cfg.space) < 2.0 - tol:
            raise AssertionError("balls overlap")


def resolve_contacts(B, X, Y, cfg: SimConfig):
    """Fixed-point contact resolution for a driver position and one or two
    balls (reference implementation).

    Per iteration the deeper driver-ball penetration is resolved by moving
    that ball along the center line until they just touch, then any ball-ball
    overlap is passed to the partner of the most recently pushed ball.
    Raises when the loop fails to converge within ``max_contact_iters``.
    """
    space = cfg.space
    tol = cfg.tol_overlap
    B = _canon(B, space)
    X = _canon(X, space).copy()
    Y = None if Y is None else _canon(Y, space).copy()
    dLX = dLY = 0.0
    pushesX = pushesY = 0
    double = False
    last_pushed = -1
    for _ in range(cfg.max_contact_iters):
        pen_x = 1.0 - _dist(X, B, space)
        pen_y = 1.0 - _dist(Y, B, space) if Y is not None else -math.inf
        progressed = False
        if pen_x > tol or pen_y > tol:
            if pen_x > tol and pen_y > tol:
                double = True
            if pen_x >= pen_y:
                n = displacement(X, B, space)
                n /= np.linalg.norm(n)
                X = _canon(X - n * pen_x, space)
                dLX += pen_x
                pushesX += 1
                last_pushed = 0
            else:
                n = displacement(Y, B, space)
                n /= np.linalg.norm(n)
                Y = _canon(Y - n * pen_y, space)
                dLY += pen_y
                pushesY += 1
                last_pushed = 1
            progressed = True
        if Y is not None:
            gap = 2.0 - _dist(X, Y, space)
            if gap > tol:
                if last_pushed == 0:
                    w = displacement(X, Y, space)
                    Y = _canon(Y + w / np.linalg.norm(w) * gap, space)
                    pushesY += 1
                else:
                    w = displacement(Y, X, space)
                    X = _canon(X + w / np.linalg.norm(w) * gap, space)
                    pushesX += 1
                progressed = True
        if not progressed:
            return X, Y, StepReport(dLX, dLY, pushesX, pushesY, double)
    raise RuntimeError("contact resolution stalled")


def step(state: SystemState, cfg: SimConfig, noise) -> SystemState:
    """Advance one time step with the supplied Gaussian noise vector."""
    noise = np.asarray(noise, dtype=np.float64)
    out = state.copy()
    out.t = state.t + cfg.dt
    out.fB = state.fB + noise
    out.B = _canon(state.B + noise, cfg.space)
    if cfg.mode is Mode.PUSHING:
        oldX, oldY = out.X, out.Y
        X, Y, rep = resolve_contacts(out.B, out.X, out.Y, cfg)
        out.fX = state.fX + _unwrapped_move(oldX, X, cfg.space)
        out.X = X
        out.LX = state.LX + rep.dLX
        if rep.dLX > 0 and out.vLX is not None:
            n = displacement(X, out.B, cfg.space)
            out.vLX = state.vLX + n / np.linalg.norm(n) * rep.dLX
        if Y is not None:
            out.fY = state.fY + _unwrapped_move(oldY, Y, cfg.space)
            out.Y = Y
            out.LY = state.LY + rep.dLY
            if rep.dLY > 0 and out.vLY is not None:
                n = displacement(Y, out.B, cfg.space)
                out.vLY = state.vLY + n / np.linalg.norm(n) * rep.dLY
    else:
        # frozen: project the driver out of the fixed balls, deeper first
        balls = [state.X] if state.Y is None else [state.X, state.Y]
        z = out.B.copy()
        dL = [0.0, 0.0]
        vL = [np.zeros(cfg.space.dim), np.zeros(cfg.space.dim)]
        for _ in range(cfg.max_contact_iters):
            pens = [1.0 - _dist(c, z, cfg.space) for c in balls]
            i = int(np.argmax(pens))
            if pens[i] <= cfg.tol_overlap:
                break
            n = displacement(balls[i], z, cfg.space)
            n /= np.linalg.norm(n)
            moved = _canon(balls[i] + n, cfg.space)
            out.fB = out.fB + _unwrapped_move(z, moved, cfg.space)
            z = moved
            dL[i] += pens[i]
            vL[i] += n * pens[i]
        else:
            raise RuntimeError("contact resolution stalled")
        out.B = z
        out.LX = state.LX + dL[0]
        out.LY = state.LY + dL[1]
        if out.vLX is not None:
            out.vLX = state.vLX + vL[0]
        if out.vLY is not None and state.vLY is not None:
            out.vLY = state.vLY + vL[1]
    return out


def _unwrapped_move(old, new, space: Space):
    if not space.finite:
        return np.asarray(new) - np.asarray(old)
    return displacement(old, new, space)


def gaussian_noise_stream(cfg: SimConfig, n_steps: int) -> np.ndarray:
    """The documented noise stream: step k consumes the k-th d-vector drawn
    from the Philox generator seeded by ``(seed,)``."""
    rng = spawn_generator(cfg.seed)
    return rng.normal(0.0, np.sqrt(cfg.dt), size=(n_steps, cfg.space.dim))


@dataclass
class PathResult:
    ledger: LocalTimeLedger
    snapshots: np.ndarray  # rows: t, LX, LY, positions (mode dependent)
    final: SystemState
    excursions: np.ndarray | None = None
    episodes: np.ndarray | None = None
    level_positions_x: np.ndarray | None = None
    level_positions_y: np.ndarray | None = None
    stalled: int = 0
    double_contacts: int = 0


def run_path(
    cfg: SimConfig,
    initial: SystemState | None = None,
    ledger_stride: int = 100,
    snapshot_stride: int = 0,
    exc_threshold: float | None = None,
    replica: int = 0,
    max_excursions: int = 2_000_000,
    max_episodes: int = 4_000_000,
    max_levels: int = 0,
    level_step: float = 1.0,
    level_on_joint: bool = True,
) -> PathResult:
    """Advance ``t_end/dt`` steps and emit ledgers plus optional snapshots.

    Deterministic given ``(seed, cfg, initial)``; replica ``k`` draws from
    the kernel stream ``(seed, k)``.
    """
    if initial is None:
        initial = initial_state(cfg)
    check_state(initial, cfg)
    d = cfg.space.dim
    r = cfg.space.edge if cfg.space.finite else 0.0
    n_steps = cfg.n_steps
    seed64 = kernel_seed(cfg.seed, replica)
    if exc_threshold is None:
        exc_threshold = cfg.dt**0.25
    snap_cap = 0 if snapshot_stride <= 0 else n_steps // snapshot_stride + 1

    if cfg.mode is Mode.FROZEN:
        centers = np.atleast_2d(
            initial.X if initial.Y is None else np.vstack([initial.X, initial.Y])
        ).astype(np.float64)
        led_t, led_l, exc, snaps, z, fz, lt, vlt, stalled = kernels.kernel_frozen_path(
            seed64,
            r,
            centers,
            initial.B.astype(np.float64),
            cfg.dt,
            n_steps,
            cfg.tol_overlap,
            cfg.max_contact_iters,
            ledger_stride,
            exc_threshold,
            max_excursions,
            snapshot_stride if snapshot_stride > 0 else 0,
            snap_cap,
        )
        if stalled:
            raise RuntimeError(f"contact resolution stalled on {stalled} steps")
        final = SystemState(
            t=n_steps * cfg.dt,
            B=z,
            X=initial.X.copy(),
            fB=fz,
            fX=initial.fX.copy(),
            LX=float(lt[0]),
            vLX=vlt[0].copy(),
            Y=None if initial.Y is None else initial.Y.copy(),
            fY=None if initial.fY is None else initial.fY.copy(),
            LY=float(lt[1]) if centers.shape[0] > 1 else 0.0,
            vLY=vlt[1].copy() if centers.shape[0] > 1 else None,
        )
        ledger = LocalTimeLedger.from_split(led_t, led_l[:, 0], led_l[:, 1])
        return PathResult(ledger, snaps, final, excursions=exc, stalled=stalled)

    n_balls = initial.n_balls
    y0 = initial.Y if initial.Y is not None else np.zeros(d)
    (
        led_t,
        led_l,
        lev_x,
        lev_y,
        snaps,
        episodes,
        b,
        x,
        y,
        fb,
        fx,
        fy,
        lt,
        vlt,
        stalled,
        double_contacts,
    ) = kernels.kernel_pushing_path(
        seed64,
        r,
        d,
        n_balls,
        initial.B.astype(np.float64),
        initial.X.astype(np.float64),
        y0.astype(np.float64),
        cfg.dt,
        n_steps,
        cfg.tol_overlap,
        cfg.max_contact_iters,
        level_step,
        level_on_joint,
        max_levels,
        ledger_stride,
        snapshot_stride if snapshot_stride > 0 else 0,
        snap_cap,
        exc_threshold,
        max_episodes,
    )
    if stalled:
        raise RuntimeError(f"contact resolution stalled on {stalled} steps")
    final = SystemState(
        t=n_steps * cfg.dt,
        B=b,
        X=x,
        fB=fb,
        fX=fx,
        LX=float(lt[0]),
        vLX=vlt[0].copy(),
        Y=y if n_balls == 2 else None,
        fY=fy if n_balls == 2 else None,
        LY=float(lt[1]),
        vLY=vlt[1].copy() if n_balls == 2 else None,
    )
    ledger = LocalTimeLedger.from_split(led_t, led_l[:, 0], led_l[:, 1])
    return PathResult(
        ledger,
        snaps,
        final,
        episodes=episodes,
        level_positions_x=lev_x,
        level_positions_y=lev_y,
        stalled=stalled,
        double_contacts=double_contacts,
    )


# ---------------------------------------------------------------------------
# specialised frozen-mode drivers (whole-space single ball)
# ---------------------------------------------------------------------------


def shell_crossing_samples(d: int, b: float, dt: float, n: int, seed: int, replica: int = 0):
    """Samples of boundary local time accrued between touching the unit
    sphere and first reaching radius ``b`` (one sample per shell cycle)."""
    # generous cap: expected time per cycle is O(b^2)
    max_steps = int(min(4e9, 400.0 * n * (b * b) / dt))
    samples, _ = kernels.kernel_shell_crossing(
        kernel_seed(seed, replica), d, float(b), float(dt), int(n), max_steps
    )
    if samples.size < n:
        raise RuntimeError("underpowered: step budget exhausted before n samples")
    return samples


def position_at_level(
    d: int,
    level: float,
    dt: float,
    n_paths: int,
    seed: int,
    kill_radius: float = 20.0,
    replica: int = 0,
):
    """Driver direction at the first time the boundary local time reaches
    ``level``, for paths started at e1; returns (first coords, yield)."""
    max_steps_each = int(min(2e8, 40.0 * kill_radius**2 / dt))
    coords, reached = kernels.kernel_position_at_level(
        kernel_seed(seed, replica), d, float(level), float(dt), float(kill_radius),
        int(n_paths), max_steps_each,
    )
    mask = reached.astype(bool)
    return coords[mask], float(mask.mean())


def vector_local_time_at_crossing(
    d: int, b: float, dt: float, n_paths: int, seed: int, adaptive: bool = True, replica: int = 0
):
    """First component of the vector local time at the first crossing of
    radius ``b``, one sample per path (uniform sphere starts)."""
    max_steps_each = int(min(4e8, 2000.0 * np.log(b) ** 2 / dt + 1e6))
    out, ok = kernels.kernel_vector_lt_at_crossing(
        kernel_seed(seed, replica), d, float(b), float(dt), int(n_paths), max_steps_each, adaptive
    )
    if not ok.all():
        out = out[ok.astype(bool)]
    return out

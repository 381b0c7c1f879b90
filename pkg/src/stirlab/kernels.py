"""Compiled inner loops for the path engines and walkers.

All kernels are ``nogil`` so replicas can run on a thread pool, and every
kernel owns a private xoshiro256++ stream seeded from a single 64-bit word
(see :mod:`stirlab.rng`); Gaussians come from the Box-Muller transform
computed pairwise.  Given the same seed word a kernel reproduces its output
bit for bit, independent of thread count.

A torus edge of ``0.0`` selects whole-space (no wrapping) geometry; kernels
never see ``inf``.

Far from every boundary the Brownian driver may take larger time steps
(``adaptive=True``): Gaussian increments are exact at any step size, and the
step is kept below a quarter of the distance to the nearest boundary so the
refinement near contacts is unchanged.  Only estimators that are functions of
boundary events use this mode; fixed-step kernels record time-uniform
ledgers.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# xoshiro256++ with splitmix64 seeding
# ---------------------------------------------------------------------------

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_MUL2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True, nogil=True)
def rng_new(seed):
    """xoshiro256++ state from a 64-bit seed via splitmix64 expansion."""
    st = np.empty(4, dtype=np.uint64)
    s = np.uint64(seed)
    for i in range(4):
        s = s + _SM_GAMMA
        z = s
        z = (z ^ (z >> np.uint64(30))) * _SM_MUL1
        z = (z ^ (z >> np.uint64(27))) * _SM_MUL2
        st[i] = z ^ (z >> np.uint64(31))
    return st


@njit(cache=True, nogil=True, inline="always")
def rng_u64(st):
    s0 = st[0]
    s1 = st[1]
    s2 = st[2]
    s3 = st[3]
    out = _rotl(s0 + s3, 23) + s0
    t = s1 << np.uint64(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    st[0] = s0
    st[1] = s1
    st[2] = s2
    st[3] = s3
    return out


@njit(cache=True, nogil=True, inline="always")
def rng_unit(st):
    """Uniform double in [0, 1) with 53 random bits."""
    return (rng_u64(st) >> np.uint64(11)) * 1.1102230246251565e-16


@njit(cache=True, nogil=True, inline="always")
def rng_gauss_pair(st):
    u1 = 1.0 - rng_unit(st)  # in (0, 1], keeps log finite
    u2 = rng_unit(st)
    r = np.sqrt(-2.0 * np.log(u1))
    a = 6.283185307179586 * u2
    return r * np.cos(a), r * np.sin(a)


@njit(cache=True, nogil=True)
def _fill_gauss(st, out, scale):
    d = out.shape[0]
    i = 0
    while i + 1 < d:
        g1, g2 = rng_gauss_pair(st)
        out[i] = scale * g1
        out[i + 1] = scale * g2
        i += 2
    if i < d:
        g1, g2 = rng_gauss_pair(st)
        out[i] = scale * g1


@njit(cache=True, nogil=True)
def _fill_sphere_dir(st, out):
    """Uniform direction on the unit (d-1)-sphere."""
    d = out.shape[0]
    while True:
        _fill_gauss(st, out, 1.0)
        s = 0.0
        for j in range(d):
            s += out[j] * out[j]
        if s > 1e-24:
            inv = 1.0 / np.sqrt(s)
            for j in range(d):
                out[j] *= inv
            return


# ---------------------------------------------------------------------------
# torus scalar helpers (edge 0.0 == no wrapping)
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True, inline="always")
def _wrap1(x, r):
    # fast paths cover |x - canonical| < r, the only case in the step loops
    if r <= 0.0:
        return x
    if x >= r:
        x -= r
        if x < r:
            return x
    elif x >= 0.0:
        return x
    else:
        x += r
        # adding r to a tiny negative can round to exactly r
        if 0.0 <= x < r:
            return x
    y = x - r * np.floor(x / r)
    if y >= r:
        y -= r
    return y


@njit(cache=True, nogil=True, inline="always")
def _mindiff1(dx, r):
    # canonical operands give dx in (-r, r); one adjustment lands the
    # minimal representative in (-r/2, r/2] with the tie going to +r/2
    if r <= 0.0:
        return dx
    if dx > 0.5 * r:
        dx -= r
        if dx <= 0.5 * r:
            return dx
    elif dx > -0.5 * r:
        return dx
    else:
        dx += r
        if dx > -0.5 * r:
            return dx
    y = dx - r * np.floor(dx / r)
    if y >= r:
        y -= r
    if y > 0.5 * r:
        y -= r
    return y


@njit(cache=True, nogil=True)
def _disp_to(center, p, r, out):
    """Minimal displacement from ``center`` to ``p``; returns its length."""
    s = 0.0
    for j in range(center.shape[0]):
        v = _mindiff1(p[j] - center[j], r)
        out[j] = v
        s += v * v
    return np.sqrt(s)


# ---------------------------------------------------------------------------
# frozen single-ball paths in R^d (driver reflected off the unit sphere)
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _reflect_unit_ball(z, d):
    """Project ``z`` out of the unit ball; returns the penetration depth."""
    s = 0.0
    for j in range(d):
        s += z[j] * z[j]
    rho = np.sqrt(s)
    if rho >= 1.0:
        return 0.0
    if rho < 1e-12:
        rho = 1e-12  # driver essentially at the center: push along e1
        z[0] = rho
        for j in range(1, d):
            z[j] = 0.0
    inv = 1.0 / rho
    for j in range(d):
        z[j] *= inv
    return 1.0 - rho


@njit(cache=True, nogil=True)
def kernel_shell_crossing(seed, d, b, dt, n_samples, max_steps):
    """Local time accumulated between touching the unit sphere and first
    reaching radius ``b``, sampled ``n_samples`` times.

    Each sample starts on the sphere at a uniform point (the crossing law
    does not depend on the start point, by rotational invariance).  In d=2
    the recurrent path is recycled: after a crossing the path runs until it
    touches the sphere again and a new sample begins; in d>=3 a fresh path is
    used per sample.
    """
    st = rng_new(seed)
    out = np.empty(n_samples, dtype=np.float64)
    z = np.empty(d, dtype=np.float64)
    g = np.empty(d, dtype=np.float64)
    sig = np.sqrt(dt)
    recycle = d == 2
    n_done = 0
    steps = 0
    _fill_sphere_dir(st, z)
    base_l = 0.0
    l_acc = 0.0
    while n_done < n_samples and steps < max_steps:
        steps += 1
        _fill_gauss(st, g, sig)
        s = 0.0
        for j in range(d):
            z[j] += g[j]
            s += z[j] * z[j]
        rho = np.sqrt(s)
        if rho >= b:
            out[n_done] = l_acc - base_l
            n_done += 1
            if recycle:
                # run until the sphere is touched again, then start a cycle
                while steps < max_steps:
                    steps += 1
                    _fill_gauss(st, g, sig)
                    for j in range(d):
                        z[j] += g[j]
                    dl = _reflect_unit_ball(z, d)
                    if dl > 0.0:
                        l_acc += dl
                        base_l = l_acc
                        break
            else:
                _fill_sphere_dir(st, z)
                base_l = l_acc
        else:
            l_acc += _reflect_unit_ball(z, d)
    return out[:n_done], steps


@njit(cache=True, nogil=True)
def kernel_position_at_level(seed, d, level, dt, kill_radius, n_paths, max_steps_each):
    """First coordinate of the reflected driver at the inverse-local-time
    instant ``sigma(level)``, started from e1 on the unit sphere.

    Paths that wander beyond ``kill_radius`` before accruing the level are
    abandoned (in d>=3 the total local time is finite, so a fraction of paths
    never reach the level).  Returns (first coordinates, reached flags).
    """
    st = rng_new(seed)
    coords = np.zeros(n_paths, dtype=np.float64)
    reached = np.zeros(n_paths, dtype=np.uint8)
    z = np.empty(d, dtype=np.float64)
    g = np.empty(d, dtype=np.float64)
    sig = np.sqrt(dt)
    kill2 = kill_radius * kill_radius
    for p in range(n_paths):
        for j in range(d):
            z[j] = 0.0
        z[0] = 1.0
        l_acc = 0.0
        for _ in range(max_steps_each):
            _fill_gauss(st, g, sig)
            s = 0.0
            for j in range(d):
                z[j] += g[j]
                s += z[j] * z[j]
            if s >= kill2:
                break
            dl = _reflect_unit_ball(z, d)
            if dl > 0.0:
                l_acc += dl
                if l_acc >= level:
                    coords[p] = z[0]
                    reached[p] = 1
                    break
    return coords, reached


@njit(cache=True, nogil=True)
def kernel_vector_lt_at_crossing(seed, d, b, dt, n_paths, max_steps_each, adaptive):
    """First component of the vector local time at the first crossing of
    radius ``b``, one sample per path, started uniformly on the unit sphere.
    """
    st = rng_new(seed)
    out = np.empty(n_paths, dtype=np.float64)
    ok = np.zeros(n_paths, dtype=np.uint8)
    z = np.empty(d, dtype=np.float64)
    g = np.empty(d, dtype=np.float64)
    for p in range(n_paths):
        _fill_sphere_dir(st, z)
        v1 = 0.0
        for _ in range(max_steps_each):
            s = 0.0
            for j in range(d):
                s += z[j] * z[j]
            rho = np.sqrt(s)
            if rho >= b:
                out[p] = v1
                ok[p] = 1
                break
            h = dt
            if adaptive:
                f = (rho - 1.0) * 0.25
                if f > 1.0:
                    h = dt * f * f
            _fill_gauss(st, g, np.sqrt(h))
            for j in range(d):
                z[j] += g[j]
            dl = _reflect_unit_ball(z, d)
            if dl > 0.0:
                v1 += dl * z[0]
    return out, ok


# ---------------------------------------------------------------------------
# scaling coupling: free Brownian path, running minimum radius
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def kernel_coupling_batch(seed, d, dt, n_paths, floor_level, r_out, level, max_steps_each):
    """Total local time -log(min radius) of the coupled reflection, plus the
    driver direction when the running minimum first reaches exp(-level).

    Free Brownian paths start at e1.  A path ends when it exits ``r_out``
    (further minima are then negligible) or when the minimum reaches
    ``exp(-floor_level)``, which censors the local time at ``floor_level``.
    """
    st = rng_new(seed)
    l_inf = np.empty(n_paths, dtype=np.float64)
    at_level = np.zeros(n_paths, dtype=np.float64)
    reached = np.zeros(n_paths, dtype=np.uint8)
    x = np.empty(d, dtype=np.float64)
    g = np.empty(d, dtype=np.float64)
    m_floor = np.exp(-floor_level)
    m_level = np.exp(-level)
    r_out2 = r_out * r_out
    for p in range(n_paths):
        for j in range(d):
            x[j] = 0.0
        x[0] = 1.0
        m = 1.0
        hit_level = False
        for _ in range(max_steps_each):
            s = 0.0
            for j in range(d):
                s += x[j] * x[j]
            rho = np.sqrt(s)
            if rho < m:
                m = rho
                if not hit_level and m <= m_level:
                    at_level[p] = x[0] / rho
                    reached[p] = 1
                    hit_level = True
            if s >= r_out2 or m <= m_floor:
                break
            # Gaussian increments are exact at any step size; refine near the
            # running minimum (scale m) and keep steps below a quarter of the
            # distance back to the minimum zone otherwise.
            scale = (rho - m) * 0.25
            if scale < m:
                scale = m
            h = dt * scale * scale
            _fill_gauss(st, g, np.sqrt(h))
            for j in range(d):
                x[j] += g[j]
        l_inf[p] = -np.log(m)
    return l_inf, at_level, reached


@njit(cache=True, nogil=True)
def kernel_coupling_trace(seed, d, dt, floor_level, r_out, stride, max_rows, max_steps):
    """Stride-sampled trace of one coupling path.

    Row layout: time, |B|, running min M, time change C = int M^-2 ds,
    local time -log M, then the d components of U = B/M.
    """
    st = rng_new(seed)
    rows = np.zeros((max_rows, 5 + d), dtype=np.float64)
    x = np.empty(d, dtype=np.float64)
    g = np.empty(d, dtype=np.float64)
    for j in range(d):
        x[j] = 0.0
    x[0] = 1.0
    m = 1.0
    c_clock = 0.0
    t = 0.0
    m_floor = np.exp(-floor_level)
    n_rows = 0
    step = 0
    while step < max_steps and n_rows < max_rows:
        s = 0.0
        for j in range(d):
            s += x[j] * x[j]
        rho = np.sqrt(s)
        if rho < m:
            m = rho
        if step % stride == 0:
            rows[n_rows, 0] = t
            rows[n_rows, 1] = rho
            rows[n_rows, 2] = m
            rows[n_rows, 3] = c_clock
            rows[n_rows, 4] = -np.log(m)
            for j in range(d):
                rows[n_rows, 5 + j] = x[j] / m
            n_rows += 1
        if rho >= r_out or m <= m_floor:
            break
        scale = (rho - m) * 0.25
        if scale < m:
            scale = m
        h = dt * scale * scale
        _fill_gauss(st, g, np.sqrt(h))
        for j in range(d):
            x[j] += g[j]
        c_clock += h / (m * m)
        t += h
        step += 1
    return rows[:n_rows]


# ---------------------------------------------------------------------------
# frozen mode with fixed obstacles (torus or whole space)
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _project_out_of(z, center, r, tol, out_v):
    """Project ``z`` radially out of the unit ball at ``center`` (wrapped).

    Returns the penetration depth (0 when there is no overlap) and leaves the
    outward unit normal in ``out_v``.
    """
    d = z.shape[0]
    dist = _disp_to(center, z, r, out_v)
    if dist >= 1.0 - tol:
        return 0.0
    if dist < 1e-12:
        dist = 1e-12
        out_v[0] = dist
        for j in range(1, d):
            out_v[j] = 0.0
    inv = 1.0 / dist
    for j in range(d):
        out_v[j] *= inv
        z[j] = _wrap1(center[j] + out_v[j], r)
    return 1.0 - dist


@njit(cache=True, nogil=True)
def kernel_frozen_path(
    seed,
    r,
    centers,
    z0,
    dt,
    n_steps,
    tol,
    max_iters,
    ledger_stride,
    exc_threshold,
    exc_cap,
    snap_stride,
    snap_cap,
):
    """Driver reflected off one or two fixed unit balls.

    Records per-ball boundary local time on a stride, excursion records (one
    row per return to a ball surface after exceeding the departure
    threshold), and optional position snapshots.  Excursion row layout:
    ``start[d], end[d], zeta, max_radius, start_ball, end_ball, t_start``.
    Returns ledger arrays, excursions, snapshots, per-ball local times and
    vector local times, and a stall count (unresolved contacts).
    """
    st = rng_new(seed)
    n_balls, d = centers.shape
    z = z0.copy()
    fz = z0.copy()
    lt = np.zeros(n_balls, dtype=np.float64)
    vlt = np.zeros((n_balls, d), dtype=np.float64)
    sig = np.sqrt(dt)
    g = np.empty(d, dtype=np.float64)
    v = np.empty(d, dtype=np.float64)

    n_led = n_steps // ledger_stride + 2
    led_t = np.zeros(n_led, dtype=np.float64)
    led_l = np.zeros((n_led, 2), dtype=np.float64)
    n_led_done = 1  # row 0 is (0, 0, 0)

    exc = np.zeros((exc_cap, 2 * d + 5), dtype=np.float64)
    n_exc = 0
    snaps = np.zeros((snap_cap, 3 + 2 * d), dtype=np.float64)
    n_snap = 0

    last_ball = -1
    last_pos = np.zeros(d, dtype=np.float64)
    last_t = 0.0
    max_r = 1.0
    stalled = 0

    # initial contact state: start on a surface if applicable
    for i in range(n_balls):
        dist = _disp_to(centers[i], z, r, v)
        if dist <= 1.0 + tol:
            last_ball = i
            for j in range(d):
                last_pos[j] = z[j]

    z_before = np.empty(d, dtype=np.float64)
    for step in range(1, n_steps + 1):
        _fill_gauss(st, g, sig)
        for j in range(d):
            fz[j] += g[j]
            z[j] = _wrap1(z[j] + g[j], r)
        # fast path: no obstacle within reach
        dist0 = _disp_to(centers[0], z, r, v)
        dist1 = 1e300
        if n_balls > 1:
            dist1 = _disp_to(centers[1], z, r, v)
        contact_ball = -1
        if dist0 < 1.0 - tol or dist1 < 1.0 - tol:
            resolved = False
            for _ in range(max_iters):
                deepest = -1
                pen = tol
                for i in range(n_balls):
                    dist = _disp_to(centers[i], z, r, v)
                    if 1.0 - dist > pen:
                        pen = 1.0 - dist
                        deepest = i
                if deepest < 0:
                    resolved = True
                    break
                for j in range(d):
                    z_before[j] = z[j]
                dl = _project_out_of(z, centers[deepest], r, tol, v)
                lt[deepest] += dl
                for j in range(d):
                    vlt[deepest, j] += dl * v[j]
                    # projection pushes are far shorter than r/2, so the
                    # minimal displacement is the true move and the lift
                    # stays consistent
                    fz[j] += _mindiff1(z[j] - z_before[j], r)
                contact_ball = deepest
            if not resolved:
                stalled += 1
        t_now = step * dt
        if contact_ball >= 0:
            if last_ball >= 0 and max_r >= 1.0 + exc_threshold and n_exc < exc_cap:
                for j in range(d):
                    exc[n_exc, j] = last_pos[j]
                    exc[n_exc, d + j] = z[j]
                exc[n_exc, 2 * d] = t_now - last_t
                exc[n_exc, 2 * d + 1] = max_r
                exc[n_exc, 2 * d + 2] = last_ball
                exc[n_exc, 2 * d + 3] = contact_ball
                exc[n_exc, 2 * d + 4] = last_t
                n_exc += 1
            last_ball = contact_ball
            for j in range(d):
                last_pos[j] = z[j]
            last_t = t_now
            max_r = 1.0
        elif last_ball >= 0:
            dist = dist0 if last_ball == 0 else dist1
            if dist > max_r:
                max_r = dist
        if step % ledger_stride == 0 and n_led_done < n_led:
            led_t[n_led_done] = t_now
            led_l[n_led_done, 0] = lt[0]
            led_l[n_led_done, 1] = lt[1] if n_balls > 1 else 0.0
            n_led_done += 1
        if snap_stride > 0 and step % snap_stride == 0 and n_snap < snap_cap:
            snaps[n_snap, 0] = t_now
            snaps[n_snap, 1] = lt[0]
            snaps[n_snap, 2] = lt[1] if n_balls > 1 else 0.0
            for j in range(d):
                snaps[n_snap, 3 + j] = z[j]
                snaps[n_snap, 3 + d + j] = fz[j]
            n_snap += 1
    return (
        led_t[:n_led_done],
        led_l[:n_led_done],
        exc[:n_exc],
        snaps[:n_snap],
        z,
        fz,
        lt,
        vlt,
        stalled,
    )


# ---------------------------------------------------------------------------
# pushing mode: free driver, balls pushed by contact
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _push_ball_from_driver(ball, fball, vlt_row, b_pos, r, tol, v):
    """Move a ball away from the driver so they just touch.

    Returns the boundary local-time increment (the penetration depth).
    ``v`` receives the outward normal at the driver (center -> driver).
    """
    d = ball.shape[0]
    dist = _disp_to(ball, b_pos, r, v)
    if dist >= 1.0 - tol:
        return 0.0
    if dist < 1e-12:
        dist = 1e-12
        v[0] = dist
        for j in range(1, d):
            v[j] = 0.0
    dl = 1.0 - dist
    inv = 1.0 / dist
    for j in range(d):
        v[j] *= inv
        ball[j] = _wrap1(ball[j] - v[j] * dl, r)
        fball[j] -= v[j] * dl
        vlt_row[j] += v[j] * dl
    return dl


@njit(cache=True, nogil=True)
def _separate_balls(mover, fmover, anchor, r, tol, v):
    """Push ``mover`` away from ``anchor`` along the center line to gap 2."""
    d = mover.shape[0]
    dist = _disp_to(anchor, mover, r, v)
    if dist >= 2.0 - tol:
        return 0.0
    if dist < 1e-12:
        dist = 1e-12
        v[0] = dist
        for j in range(1, d):
            v[j] = 0.0
    dxy = 2.0 - dist
    inv = 1.0 / dist
    for j in range(d):
        v[j] *= inv
        mover[j] = _wrap1(mover[j] + v[j] * dxy, r)
        fmover[j] += v[j] * dxy
    return dxy


@njit(cache=True, nogil=True)
def kernel_pushing_path(
    seed,
    r,
    d,
    n_balls,
    b0,
    x0,
    y0,
    dt,
    n_steps,
    tol,
    max_iters,
    level_step,
    level_on_joint,
    max_levels,
    ledger_stride,
    snap_stride,
    snap_cap,
    exc_threshold,
    episode_cap,
):
    """Free Brownian driver pushing one or two hard balls on a torus.

    Between contacts the driver diffuses freely; on contact the touched ball
    is moved along the center line so driver and ball just touch, and the
    moved ball transmits any overlap to its partner along their center line.
    When both balls are inside the driver's reach in the same step the deeper
    penetration is resolved first.

    Optionally records the unfolded ball positions every ``level_step`` of
    boundary local time (of the touched ball's own clock, or of the joint
    clock when ``level_on_joint``), coarse ledgers and position snapshots,
    and one episode entry (which ball was hit) per completed excursion whose
    maximum departure exceeded ``exc_threshold``.
    """
    st = rng_new(seed)
    b = b0.copy()
    fb = b0.copy()
    x = x0.copy()
    fx = x0.copy()
    y = y0.copy()
    fy = y0.copy()
    lt = np.zeros(2, dtype=np.float64)
    vlt = np.zeros((2, d), dtype=np.float64)
    sig = np.sqrt(dt)
    g = np.empty(d, dtype=np.float64)
    v = np.empty(d, dtype=np.float64)

    lev_x = np.zeros((max_levels, d), dtype=np.float64)
    lev_y = np.zeros((max_levels, d), dtype=np.float64)
    n_lev = 0
    next_level = level_step

    n_led = n_steps // ledger_stride + 2
    led_t = np.zeros(n_led, dtype=np.float64)
    led_l = np.zeros((n_led, 2), dtype=np.float64)
    n_led_done = 1

    snaps = np.zeros((snap_cap, 3 + 6 * d), dtype=np.float64)
    n_snap = 0

    episodes = np.zeros(episode_cap, dtype=np.int8)
    n_epi = 0
    last_ball = -1
    away_max = 0.0
    stalled = 0
    double_contacts = 0

    for step in range(1, n_steps + 1):
        _fill_gauss(st, g, sig)
        for j in range(d):
            fb[j] += g[j]
            b[j] = _wrap1(b[j] + g[j], r)
        # fast path: driver clear of both balls (balls cannot have moved)
        dist_x = _disp_to(x, b, r, v)
        dist_y = 1e300
        if n_balls > 1:
            dist_y = _disp_to(y, b, r, v)
        contact_ball = -1
        pushed_any = False
        if dist_x < 1.0 - tol or dist_y < 1.0 - tol:
            resolved = False
            for _ in range(max_iters):
                dist_x = _disp_to(x, b, r, v)
                pen_x = 1.0 - dist_x
                pen_y = -1.0
                if n_balls > 1:
                    dist_y = _disp_to(y, b, r, v)
                    pen_y = 1.0 - dist_y
                progressed = False
                if pen_x > tol or pen_y > tol:
                    if pen_x > tol and pen_y > tol:
                        double_contacts += 1
                    if pen_x >= pen_y:
                        dl = _push_ball_from_driver(x, fx, vlt[0], b, r, tol, v)
                        lt[0] += dl
                        contact_ball = 0
                    else:
                        dl = _push_ball_from_driver(y, fy, vlt[1], b, r, tol, v)
                        lt[1] += dl
                        contact_ball = 1
                    progressed = True
                    pushed_any = True
                if n_balls > 1:
                    gap = _disp_to(x, y, r, v)
                    if 2.0 - gap > tol:
                        if contact_ball == 0:
                            _separate_balls(y, fy, x, r, tol, v)
                        elif contact_ball == 1:
                            _separate_balls(x, fx, y, r, tol, v)
                        else:
                            # overlap without a driver push cannot arise from
                            # a valid state; deterministic fallback moves the
                            # second ball
                            _separate_balls(y, fy, x, r, tol, v)
                        progressed = True
                if not progressed:
                    resolved = True
                    break
            if not resolved:
                stalled += 1
            # distances for the episode tracker below
            dist_x = _disp_to(x, b, r, v)
            if n_balls > 1:
                dist_y = _disp_to(y, b, r, v)
        # local-time level grid
        if max_levels > 0:
            clock = lt[0] + lt[1] if level_on_joint else lt[0]
            while clock >= next_level and n_lev < max_levels:
                for j in range(d):
                    lev_x[n_lev, j] = fx[j]
                    lev_y[n_lev, j] = fy[j]
                n_lev += 1
                next_level += level_step
        # episode bookkeeping (one entry per completed wide excursion)
        if pushed_any:
            if last_ball >= 0 and away_max >= exc_threshold and n_epi < episode_cap:
                episodes[n_epi] = contact_ball
                n_epi += 1
            last_ball = contact_ball
            away_max = 0.0
        elif last_ball >= 0:
            away = dist_x - 1.0
            if n_balls > 1 and dist_y - 1.0 < away:
                away = dist_y - 1.0
            if away > away_max:
                away_max = away
        t_now = step * dt
        if step % ledger_stride == 0 and n_led_done < n_led:
            led_t[n_led_done] = t_now
            led_l[n_led_done, 0] = lt[0]
            led_l[n_led_done, 1] = lt[1]
            n_led_done += 1
        if snap_stride > 0 and step % snap_stride == 0 and n_snap < snap_cap:
            snaps[n_snap, 0] = t_now
            snaps[n_snap, 1] = lt[0]
            snaps[n_snap, 2] = lt[1]
            for j in range(d):
                snaps[n_snap, 3 + j] = b[j]
                snaps[n_snap, 3 + d + j] = x[j]
                snaps[n_snap, 3 + 2 * d + j] = y[j]
                snaps[n_snap, 3 + 3 * d + j] = fb[j]
                snaps[n_snap, 3 + 4 * d + j] = fx[j]
                snaps[n_snap, 3 + 5 * d + j] = fy[j]
            n_snap += 1
    return (
        led_t[:n_led_done],
        led_l[:n_led_done],
        lev_x[:n_lev],
        lev_y[:n_lev],
        snaps[:n_snap],
        episodes[:n_epi],
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
    )


# ---------------------------------------------------------------------------
# walk on spheres
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def kernel_wos_two_balls(seed, r, centers, z0, eps, jump_cap, n_paths, max_jumps):
    """Hitting samples of Brownian motion on one or two unit balls (torus or
    whole space): which obstacle is hit and the cosine of the hit point's
    angle (seen from that obstacle's center) to the start direction.

    Jumps are maximal spheres capped at ``jump_cap`` (r/4 on a torus keeps
    the jump ball isometric to a Euclidean ball); a path is absorbed within
    ``eps`` of an obstacle.  Returns (ball index or -1 on stall, cosine).
    """
    st = rng_new(seed)
    n_balls, d = centers.shape
    hit = np.full(n_paths, -1, dtype=np.int64)
    cosang = np.zeros(n_paths, dtype=np.float64)
    points = np.zeros((n_paths, d), dtype=np.float64)
    x = np.empty(d, dtype=np.float64)
    v = np.empty(d, dtype=np.float64)
    dir_ = np.empty(d, dtype=np.float64)
    u0 = np.empty((n_balls, d), dtype=np.float64)
    for i in range(n_balls):
        dist = _disp_to(centers[i], z0, r, v)
        for j in range(d):
            u0[i, j] = v[j] / dist
    for p in range(n_paths):
        for j in range(d):
            x[j] = z0[j]
        for _ in range(max_jumps):
            g_min = 1e300
            nearest = 0
            for i in range(n_balls):
                dist = _disp_to(centers[i], x, r, v)
                gap = dist - 1.0
                if gap < g_min:
                    g_min = gap
                    nearest = i
            if g_min < eps:
                dist = _disp_to(centers[nearest], x, r, v)
                c = 0.0
                for j in range(d):
                    v[j] /= dist
                    c += v[j] * u0[nearest, j]
                    # radial projection of the absorbed point onto the sphere
                    points[p, j] = _wrap1(centers[nearest, j] + v[j], r)
                hit[p] = nearest
                cosang[p] = c
                break
            jump = g_min if g_min < jump_cap else jump_cap
            _fill_sphere_dir(st, dir_)
            for j in range(d):
                x[j] = _wrap1(x[j] + jump * dir_[j], r)
    return hit, cosang, points


@njit(cache=True, nogil=True)
def kernel_wos_shell(seed, d, b, start_rho, eps, n_paths, max_jumps):
    """Walk on spheres in the shell 1 < |x| < b of R^d, started at
    ``start_rho * e1``; returns 1 when the outer sphere is hit first."""
    st = rng_new(seed)
    out = np.full(n_paths, -1, dtype=np.int64)
    x = np.empty(d, dtype=np.float64)
    dir_ = np.empty(d, dtype=np.float64)
    for p in range(n_paths):
        for j in range(d):
            x[j] = 0.0
        x[0] = start_rho
        for _ in range(max_jumps):
            s = 0.0
            for j in range(d):
                s += x[j] * x[j]
            rho = np.sqrt(s)
            gap_in = rho - 1.0
            gap_out = b - rho
            if gap_in < eps:
                out[p] = 0
                break
            if gap_out < eps:
                out[p] = 1
                break
            jump = gap_in if gap_in < gap_out else gap_out
            _fill_sphere_dir(st, dir_)
            for j in range(d):
                x[j] += jump * dir_[j]
    return out


@njit(cache=True, nogil=True)
def kernel_ball_interior_hit(seed, d, base, n_samples, eps):
    """Exit points on the unit sphere of Brownian motion started inside the
    unit ball at ``base``: walk on concentric spheres, absorbing within
    ``eps`` of the boundary and projecting radially.

    The sphere-exit law at each jump is exactly uniform, so the result
    samples harmonic measure up to the ``eps`` absorption layer.
    """
    st = rng_new(seed)
    out = np.empty((n_samples, d), dtype=np.float64)
    x = np.empty(d, dtype=np.float64)
    dir_ = np.empty(d, dtype=np.float64)
    for p in range(n_samples):
        for j in range(d):
            x[j] = base[j]
        s = 0.0
        for _ in range(100000):
            s = 0.0
            for j in range(d):
                s += x[j] * x[j]
            gap = 1.0 - np.sqrt(s)
            if gap < eps:
                break
            _fill_sphere_dir(st, dir_)
            for j in range(d):
                x[j] += gap * dir_[j]
        inv = 1.0 / np.sqrt(max(s, 1e-300))
        for j in range(d):
            out[p, j] = x[j] * inv
    return out

"""Weighted-particle simulation of the fireworks equation.

A particle streams freely (at ``p / sqrt(1 + p^2)`` on relativistic
grids), explodes at rate ``gamma`` and picks a new
velocity from the same velocity-node discretization of ``P`` the
deterministic solver uses; its weight is then multiplied by ``eta`` at the
new velocity.  Within a step the rates are frozen at the step start and
explosion times are drawn exactly from the exponential clock, so several
explosions per step are possible.

All randomness comes from :func:`fireworks.rng.uniforms`, addressed by
``(seed, particle id, step, event)``.  Results therefore do not depend on
how particles are split between workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import KernelSet, p_matrix
from .phase_space import PhaseSpaceGrid, quadrature, relativistic_velocity_map
from .rng import uniforms

N_BATCHES = 10
MAX_RATE_STEP = 0.1
_INIT_STEP = 0xFFFFFFFF


@dataclass
class ParticleEnsemble:
    """Weighted particles; dead particles (left the box) keep their slot."""

    weight: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    alive: np.ndarray
    ids: np.ndarray
    rng_seed: int
    t: float = 0.0
    step: int = 0
    outflow: float = 0.0

    @property
    def n(self):
        return len(self.weight)

    @property
    def total_weight(self):
        return float(np.sum(self.weight[self.alive]))


def _cells(nodes, lo, hi, periodic):
    h = nodes[1] - nodes[0]
    left = nodes - 0.5 * h
    right = nodes + 0.5 * h
    if not periodic:
        left = np.maximum(left, lo)
        right = np.minimum(right, hi)
    return left, right


def _jitter(grid, index, u, space):
    """Uniform points in the quadrature cells of the given node indices."""
    nodes = grid.x_nodes if space else grid.v_nodes
    boxes = grid.x_box if space else grid.v_box
    periodic = space and grid.boundary == "periodic"
    out = np.empty((len(u), grid.d))
    for a in range(grid.d):
        left, right = _cells(nodes[a], boxes[a][0], boxes[a][1], periodic)
        i = index[:, a]
        out[:, a] = left[i] + u[:, a] * (right[i] - left[i])
    if periodic:
        out = _wrap(out, grid)
    return out


def _wrap(x, grid):
    lo = np.array([b[0] for b in grid.x_box])
    length = np.array([b[1] - b[0] for b in grid.x_box])
    return lo + np.mod(x - lo, length)


def init_ensemble(f0, grid: PhaseSpaceGrid, n_particles, seed):
    """Sample ``n_particles`` equal-weight particles from ``f0`` on the grid.

    A node is chosen by inverse CDF of ``w * f0``; the position and
    velocity are then uniform within that node's quadrature cell.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    f0 = np.asarray(f0, dtype=float)
    mass_density = (f0 * grid.weights).reshape(-1)
    total = float(np.sum(mass_density))
    if not total > 0:
        raise ValueError("f0 has zero total mass")
    cdf = np.cumsum(mass_density)
    ids = np.arange(n_particles, dtype=np.uint64)
    u = uniforms(seed, ids, _INIT_STEP, 0, 1 + 2 * grid.d)
    flat = np.searchsorted(cdf, u[:, 0] * cdf[-1], side="right")
    flat = np.minimum(flat, len(cdf) - 1)
    idx = np.stack(np.unravel_index(flat, grid.slice_shape), axis=-1)
    x = _jitter(grid, idx[:, : grid.d], u[:, 1: 1 + grid.d], space=True)
    xi = _jitter(grid, idx[:, grid.d:], u[:, 1 + grid.d:], space=False)
    weight = np.full(n_particles, total / n_particles)
    return ParticleEnsemble(weight, x, xi, np.ones(n_particles, bool), ids, int(seed))


@dataclass(frozen=True)
class _Redistribution:
    """Column-wise sampling tables of the redistribution matrix."""

    cdf: np.ndarray       # cdf[j, i]: P(new node <= i | current node j)
    column_mass: np.ndarray

    @classmethod
    def build(cls, kernels, grid):
        p = p_matrix(kernels, grid)
        wp = p * grid.v_weights.reshape(-1)[:, None]   # w_i P[i, j]
        col = wp.sum(axis=0)
        safe = np.where(col > 0, col, 1.0)
        cdf = np.cumsum(wp, axis=0) / safe[None, :]
        return cls(np.ascontiguousarray(cdf.T), col)


def _nearest_node(v, grid):
    idx = np.empty(v.shape, dtype=np.int64)
    for a, (lo, hi) in enumerate(grid.v_box):
        h = grid.hv[a]
        idx[:, a] = np.clip(np.rint((v[:, a] - lo) / h), 0, grid.nv[a] - 1)
    return idx


def _speed(xi, grid):
    return relativistic_velocity_map(xi) if grid.relativistic else xi


def _inside(x, grid):
    ok = np.ones(len(x), bool)
    for a, (lo, hi) in enumerate(grid.x_box):
        ok &= (x[:, a] >= lo) & (x[:, a] <= hi)
    return ok


def _step_chunk(x, xi, w, ids, t, dt, step, seed, kernels, grid, redis):
    """Advance one chunk of live particles; returns (x, xi, w, alive)."""
    d = grid.d
    x, xi, w = x.copy(), xi.copy(), w.copy()
    alive = np.ones(len(w), bool)
    remaining = np.full(len(w), dt)
    active = np.arange(len(w))
    event = 0
    zero_bc = grid.boundary == "zero"
    while active.size:
        rate = np.broadcast_to(kernels.gamma(t, x[active], xi[active]), active.shape)
        u = uniforms(seed, ids[active], step, event, 2 + d)
        with np.errstate(divide="ignore"):
            tau = np.where(rate > 0, -np.log1p(-u[:, 0]) / np.where(rate > 0, rate, 1.0), np.inf)
        boom = tau < remaining[active]
        quiet = active[~boom]
        x[quiet] += _speed(xi[quiet], grid) * remaining[quiet, None]
        remaining[quiet] = 0.0

        hit = active[boom]
        if hit.size == 0:
            break
        tau_hit = tau[boom]
        ub = u[boom]
        x[hit] += _speed(xi[hit], grid) * tau_hit[:, None]
        remaining[hit] -= tau_hit
        if zero_bc:
            out = ~_inside(x[hit], grid)
            alive[hit[out]] = False
            keep = ~out
            hit, ub = hit[keep], ub[keep]
        else:
            x[hit] = _wrap(x[hit], grid)

        col = np.ravel_multi_index(_nearest_node(xi[hit], grid).T, grid.nv)
        rows = redis.cdf[col]
        new_flat = np.minimum((rows <= ub[:, 1:2]).sum(axis=1), grid.n_v - 1)
        new_idx = np.stack(np.unravel_index(new_flat, grid.nv), axis=-1)
        xi[hit] = _jitter(grid, new_idx, ub[:, 2: 2 + d], space=False)
        factor = np.broadcast_to(kernels.eta(t, x[hit], xi[hit]), hit.shape)
        w[hit] *= factor * redis.column_mass[col]
        active = hit
        event += 1

    if zero_bc:
        alive &= _inside(x, grid)
    else:
        x = _wrap(x, grid)
    return x, xi, w, alive


def step_ensemble(ens: ParticleEnsemble, kernels: KernelSet, grid: PhaseSpaceGrid, dt,
                  workers=1, chunk_size=None):
    """Advance the ensemble by ``dt``; returns a new ensemble.

    Raises ``ValueError`` if ``max gamma * dt`` exceeds 0.1 at the live
    particles.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    live = np.flatnonzero(ens.alive)
    if live.size:
        rate = np.broadcast_to(kernels.gamma(ens.t, ens.x[live], ens.xi[live]), live.shape)
        if float(np.max(rate)) * dt > MAX_RATE_STEP:
            raise ValueError(
                f"max gamma * dt = {float(np.max(rate)) * dt:.3g} exceeds {MAX_RATE_STEP}")
    redis = grid._cache.get(("redis", repr(kernels.p_kernel)))
    if redis is None:
        redis = _Redistribution.build(kernels, grid)
        grid._cache[("redis", repr(kernels.p_kernel))] = redis

    step = ens.step + 1
    if chunk_size is None:
        chunk_size = max(1, -(-live.size // max(1, workers)))
    chunks = [live[i: i + chunk_size] for i in range(0, live.size, chunk_size)]

    def run(idx):
        return _step_chunk(ens.x[idx], ens.xi[idx], ens.weight[idx], ens.ids[idx], ens.t, dt,
                           step, ens.rng_seed, kernels, grid, redis)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]

    x, xi, w, alive = ens.x.copy(), ens.xi.copy(), ens.weight.copy(), ens.alive.copy()
    for idx, (cx, cxi, cw, calive) in zip(chunks, results):
        x[idx], xi[idx], w[idx] = cx, cxi, cw
        alive[idx] = calive
    died = ens.alive & ~alive
    outflow = ens.outflow + float(np.sum(w[died]))
    return replace(ens, weight=w, x=x, xi=xi, alive=alive, t=ens.t + dt, step=step,
                   outflow=outflow)


@dataclass
class Tally:
    """Weighted estimators with batch-means standard errors."""

    t: float
    mass: float
    mass_se: float
    mean: np.ndarray
    mean_se: np.ndarray
    second: np.ndarray
    second_se: np.ndarray
    n_alive: int
    infinite_error: bool = False
    histogram: np.ndarray | None = field(default=None, repr=False)


def _batch_se(values):
    values = np.asarray(values, dtype=float)
    return np.std(values, axis=0, ddof=1) / np.sqrt(len(values))


def tally(ens: ParticleEnsemble, grid: PhaseSpaceGrid | None = None, histogram=False):
    """Total mass and per-axis velocity moments with batch-means errors.

    Particles are split into 10 batches by ``id mod 10``.  With
    ``histogram=True`` a density on the grid nodes is deposited by
    nearest-node binning.
    """
    live = ens.alive
    d = ens.xi.shape[1]
    if not live.any():
        z = np.zeros(d)
        return Tally(ens.t, 0.0, np.inf, z, np.full(d, np.inf), z.copy(), np.full(d, np.inf),
                     0, True)
    w = ens.weight[live]
    xi = ens.xi[live]
    batch = (ens.ids[live] % N_BATCHES).astype(np.int64)
    total = float(np.sum(w))
    mean = (w @ xi) / total
    second = (w @ (xi * xi)) / total

    bm, bmean, bsecond = [], [], []
    for b in range(N_BATCHES):
        sel = batch == b
        wb = w[sel]
        sb = float(np.sum(wb))
        bm.append(N_BATCHES * sb)
        if sb > 0:
            bmean.append((wb @ xi[sel]) / sb)
            bsecond.append((wb @ (xi[sel] ** 2)) / sb)
    if len(bmean) < 2:
        mean_se = second_se = np.full(d, np.inf)
    else:
        mean_se, second_se = _batch_se(bmean), _batch_se(bsecond)
    hist = None
    if histogram:
        if grid is None:
            raise ValueError("histogram needs a grid")
        hist = deposit(ens, grid)
    return Tally(ens.t, total, float(_batch_se(bm)), mean, mean_se, second, second_se,
                 int(live.sum()), False, hist)


def deposit(ens: ParticleEnsemble, grid: PhaseSpaceGrid):
    """Nearest-node histogram density (weight per quadrature cell volume)."""
    live = ens.alive
    idx = []
    for a, (lo, _) in enumerate(grid.x_box):
        i = np.rint((ens.x[live, a] - lo) / grid.hx[a]).astype(np.int64)
        idx.append(np.mod(i, grid.nx[a]) if grid.boundary == "periodic"
                   else np.clip(i, 0, grid.nx[a] - 1))
    idx.extend(_nearest_node(ens.xi[live], grid).T)
    flat = np.ravel_multi_index(tuple(idx), grid.slice_shape)
    mass = np.bincount(flat, weights=ens.weight[live], minlength=int(np.prod(grid.slice_shape)))
    return mass.reshape(grid.slice_shape) / grid.weights


def field_observables(f_slice, grid: PhaseSpaceGrid):
    """Mass and per-axis velocity moments of a deterministic slice."""
    f_slice = np.asarray(f_slice, dtype=float)
    mass = quadrature(f_slice, grid.weights)
    v = grid.v_mesh()
    mean = np.array([quadrature(f_slice * v[..., a], grid.weights) for a in range(grid.d)])
    second = np.array([quadrature(f_slice * v[..., a] ** 2, grid.weights)
                       for a in range(grid.d)])
    if mass == 0:
        return mass, np.zeros(grid.d), np.zeros(grid.d)
    return mass, mean / mass, second / mass


def run_ensemble(kernels: KernelSet, grid: PhaseSpaceGrid, n_particles, seed,
                 checkpoints, workers=1, dt=None, f0=None, histogram=False):
    """Simulate to each checkpoint time and tally there.

    ``dt`` defaults to the grid time step; checkpoints must be multiples
    of it.  With ``histogram`` the last tally carries a deposited density.
    Returns the list of :class:`Tally`.
    """
    dt = grid.dt if dt is None else float(dt)
    if f0 is None:
        f0 = np.broadcast_to(kernels.f0(0.0, grid.x_mesh(), grid.v_mesh()), grid.slice_shape)
    ens = init_ensemble(f0, grid, n_particles, seed)
    out = []
    checkpoints = sorted(checkpoints)
    for i, tc in enumerate(checkpoints):
        n_steps = int(round((tc - ens.t) / dt))
        if n_steps < 0 or abs(ens.t + n_steps * dt - tc) > 1e-9 * max(1.0, tc):
            raise ValueError(f"checkpoint {tc} is not reachable with dt={dt}")
        for _ in range(n_steps):
            ens = step_ensemble(ens, kernels, grid, dt, workers=workers)
        out.append(tally(ens, grid, histogram=histogram and i == len(checkpoints) - 1))
    return out

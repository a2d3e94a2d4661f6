"""Truncated phase-space grids, quadrature and transport along characteristics.

Fields live on a uniform tensor grid over ``x`` (``d`` axes) and ``xi``
(``d`` axes) and are stored as arrays of shape ``(*nx, *nv)`` per time
node, or ``(nt, *nx, *nv)`` for a whole history.  Integrals use the
trapezoidal rule.  Free streaming is done by shifting along each spatial
axis with linear interpolation, which keeps nonnegative data nonnegative.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import interpn

BOUNDARIES = ("zero", "periodic")


def _as_box(box, d, name):
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = np.tile(box, (d, 1))
    if box.shape != (d, 2):
        raise ValueError(f"{name} must have shape ({d}, 2), got {box.shape}")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError(f"{name} must have positive volume: {box.tolist()}")
    return tuple((float(lo), float(hi)) for lo, hi in box)


def _as_counts(n, d, name):
    n = np.atleast_1d(np.asarray(n, dtype=int))
    if n.size == 1:
        n = np.repeat(n, d)
    if n.shape != (d,):
        raise ValueError(f"{name} must have {d} entries")
    if np.any(n < 2):
        raise ValueError(f"{name} must be >= 2 on every axis, got {n.tolist()}")
    return tuple(int(k) for k in n)


def trapezoid_weights(lo, hi, n):
    """Composite trapezoidal weights for ``n`` uniform nodes on ``[lo, hi]``."""
    h = (hi - lo) / (n - 1)
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def relativistic_velocity_map(p):
    """Map momentum to velocity, ``p / sqrt(1 + |p|^2)`` with ``c = 1``.

    ``p`` may be a scalar, a vector, or an array whose last axis holds
    vector components.  The result always lies in the open unit ball.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        return p / np.sqrt(1.0 + p * p)
    norm2 = np.sum(p * p, axis=-1, keepdims=True)
    return p / np.sqrt(1.0 + norm2)


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Uniform tensor grid over space x velocity with a uniform time axis.

    Parameters
    ----------
    d : int
        Dimension of both space and velocity (1, 2 or 3).
    x_box, v_box : sequence of (lo, hi)
        Per-axis intervals.  A single pair is broadcast to all axes.
    nx, nv : int or sequence of int
        Node counts per axis (at least 2).
    dt : float
        Time step.
    nt : int
        Number of time nodes, so the horizon is ``(nt - 1) * dt``.
    boundary : {"zero", "periodic"}
        Spatial extension rule.  ``"zero"`` drops mass leaving the box;
        ``"periodic"`` wraps it around (nodes then exclude the right end).
    relativistic : bool
        If true the velocity-box coordinate is a momentum ``p`` and the
        advection speed is ``p / sqrt(1 + |p|^2)``.
    """

    d: int
    x_box: tuple
    v_box: tuple
    nx: tuple
    nv: tuple
    dt: float
    nt: int
    boundary: str = "zero"
    relativistic: bool = False
    _cache: dict = field(default_factory=dict, init=False, repr=False,
                         compare=False, hash=False)

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        object.__setattr__(self, "x_box", _as_box(self.x_box, self.d, "x_box"))
        object.__setattr__(self, "v_box", _as_box(self.v_box, self.d, "v_box"))
        object.__setattr__(self, "nx", _as_counts(self.nx, self.d, "nx"))
        object.__setattr__(self, "nv", _as_counts(self.nv, self.d, "nv"))
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.nt) < 2:
            raise ValueError(f"nt must be >= 2, got {self.nt}")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "nt", int(self.nt))
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")

    @classmethod
    def uniform(cls, d, x_box, v_box, nx, nv, t_final, nt, **kw):
        """Build a grid from a horizon ``t_final`` instead of ``dt``."""
        if int(nt) < 2:
            raise ValueError(f"nt must be >= 2, got {nt}")
        return cls(d, x_box, v_box, nx, nv, t_final / (nt - 1), nt, **kw)

    # ---- nodes and weights -------------------------------------------------

    @property
    def t_final(self):
        return self.dt * (self.nt - 1)

    @property
    def times(self):
        return self.dt * np.arange(self.nt)

    @property
    def hx(self):
        if self.boundary == "periodic":
            return tuple((hi - lo) / n for (lo, hi), n in zip(self.x_box, self.nx))
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.x_box, self.nx))

    @property
    def hv(self):
        return tuple((hi - lo) / (n - 1) for (lo, hi), n in zip(self.v_box, self.nv))

    @property
    def x_nodes(self):
        if self.boundary == "periodic":
            return [lo + h * np.arange(n)
                    for (lo, _), n, h in zip(self.x_box, self.nx, self.hx)]
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.x_box, self.nx)]

    @property
    def v_nodes(self):
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.v_box, self.nv)]

    @property
    def x_volume(self):
        return float(np.prod([hi - lo for lo, hi in self.x_box]))

    @property
    def v_volume(self):
        return float(np.prod([hi - lo for lo, hi in self.v_box]))

    @property
    def x_weights(self):
        """Tensor-product quadrature weights over space, shape ``nx``."""
        if self.boundary == "periodic":
            axes = [np.full(n, h) for n, h in zip(self.nx, self.hx)]
        else:
            axes = [trapezoid_weights(lo, hi, n) for (lo, hi), n in zip(self.x_box, self.nx)]
        return functools.reduce(np.multiply.outer, axes)

    @property
    def v_weights(self):
        """Tensor-product quadrature weights over velocity, shape ``nv``."""
        axes = [trapezoid_weights(lo, hi, n) for (lo, hi), n in zip(self.v_box, self.nv)]
        return functools.reduce(np.multiply.outer, axes)

    @property
    def weights(self):
        """Weights over the full phase space, shape ``(*nx, *nv)``."""
        return np.multiply.outer(self.x_weights, self.v_weights)

    @property
    def slice_shape(self):
        return self.nx + self.nv

    @property
    def field_shape(self):
        return (self.nt,) + self.nx + self.nv

    @property
    def n_x(self):
        return int(np.prod(self.nx))

    @property
    def n_v(self):
        return int(np.prod(self.nv))

    def x_mesh(self):
        """Spatial coordinates broadcastable to a slice: shape ``(*nx, 1.., d)``."""
        mesh = np.stack(np.meshgrid(*self.x_nodes, indexing="ij"), axis=-1)
        return mesh.reshape(self.nx + (1,) * self.d + (self.d,))

    def v_mesh(self):
        """Velocity-box coordinates broadcastable to a slice: ``(1.., *nv, d)``."""
        mesh = np.stack(np.meshgrid(*self.v_nodes, indexing="ij"), axis=-1)
        return mesh.reshape((1,) * self.d + self.nv + (self.d,))

    def v_points(self):
        """Velocity nodes flattened to shape ``(n_v, d)``."""
        return np.stack(np.meshgrid(*self.v_nodes, indexing="ij"), axis=-1).reshape(-1, self.d)

    def speed(self):
        """Advection speed per axis at each velocity node, shape ``(*nv, d)``.

        Equals the velocity coordinate, or its relativistic image.
        """
        v = np.stack(np.meshgrid(*self.v_nodes, indexing="ij"), axis=-1)
        return relativistic_velocity_map(v) if self.relativistic else v

    def time_index(self, t, atol=1e-9):
        """Index of the time node equal to ``t``; raises if ``t`` is off-grid."""
        k = int(round(t / self.dt))
        if k < 0 or k >= self.nt or abs(k * self.dt - t) > atol * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a node of the time grid [0, {self.t_final}]")
        return k

    def with_(self, **changes):
        kw = dict(d=self.d, x_box=self.x_box, v_box=self.v_box, nx=self.nx, nv=self.nv,
                  dt=self.dt, nt=self.nt, boundary=self.boundary,
                  relativistic=self.relativistic)
        kw.update(changes)
        return PhaseSpaceGrid(**kw)

    def eps_quad(self):
        """Relative discretization tolerance of this grid.

        Sum of the relative time step and the largest relative space and
        velocity mesh widths.  The transport step is first order in the
        spatial mesh and mass inequalities use a forward time difference,
        so the tolerance is first order too.  Multiply by a mass (or by a
        peak density) to get an absolute tolerance.
        """
        rx = max(h / (hi - lo) for h, (lo, hi) in zip(self.hx, self.x_box))
        rv = max(h / (hi - lo) for h, (lo, hi) in zip(self.hv, self.v_box))
        return self.dt / self.t_final + rx + rv


@dataclass
class DistributionField:
    """Mass density history ``values[k, *x, *xi]`` on ``grid``."""

    values: np.ndarray
    grid: PhaseSpaceGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.field_shape:
            raise ValueError(
                f"values shape {self.values.shape} != grid field shape {self.grid.field_shape}")

    def __getitem__(self, k):
        return self.values[k]

    def l1_norms(self):
        """``||f(t_k)||_1`` at every time node."""
        return l1_norm(self.values, self.grid)

    def mass(self):
        return quadrature(self.values, self.grid.weights)

    def min(self):
        return float(self.values.min())


def quadrature(values, weights):
    """Weighted sum over the trailing axes matching ``weights``.

    Leading axes of ``values`` (for example time) are kept.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if weights.ndim > values.ndim or values.shape[values.ndim - weights.ndim:] != weights.shape:
        raise ValueError(f"shape mismatch: values {values.shape} vs weights {weights.shape}")
    axes = tuple(range(values.ndim - weights.ndim, values.ndim))
    out = np.sum(values * weights, axis=axes)
    return float(out) if np.ndim(out) == 0 else out


def l1_norm(values, grid):
    return quadrature(np.abs(values), grid.weights)


# ---- transport --------------------------------------------------------------


def _axis_shift_plan(grid, axis, displacement):
    """Gather indices/weights to evaluate ``u(x - D)`` along spatial ``axis``.

    ``displacement`` has shape ``nv`` (per velocity node).  Returns two
    (index, weight) pairs broadcastable against a slice.
    """
    d = grid.d
    n = grid.nx[axis]
    h = grid.hx[axis]
    r = -np.asarray(displacement, dtype=float) / h
    base = np.floor(r)
    theta = r - base
    # snap tiny fractions so exact integer shifts stay exact
    snap = np.isclose(theta, 1.0, rtol=0.0, atol=1e-12)
    base = np.where(snap, base + 1, base)
    theta = np.where(snap, 0.0, theta)
    theta = np.where(np.isclose(theta, 0.0, rtol=0.0, atol=1e-12), 0.0, theta)

    shape_x = [1] * (2 * d)
    shape_x[axis] = n
    i = np.arange(n).reshape(shape_x)
    shape_v = (1,) * d + tuple(grid.nv)
    base = base.reshape(shape_v).astype(np.int64)
    theta = theta.reshape(shape_v)

    i0 = i + base
    i1 = i0 + 1
    if grid.boundary == "periodic":
        w0 = np.broadcast_to(1.0 - theta, np.broadcast_shapes(i0.shape, theta.shape))
        w1 = np.broadcast_to(theta, w0.shape)
        return (np.mod(i0, n), w0.copy()), (np.mod(i1, n), w1.copy())
    ok0 = (i0 >= 0) & (i0 < n)
    ok1 = (i1 >= 0) & (i1 < n)
    w0 = np.where(ok0, 1.0 - theta, 0.0)
    w1 = np.where(ok1, theta, 0.0)
    return (np.clip(i0, 0, n - 1), w0), (np.clip(i1, 0, n - 1), w1)


def _shift_plan(grid, s):
    key = ("shift", round(float(s), 15))
    plan = grid._cache.get(key)
    if plan is None:
        speed = grid.speed()
        plan = [_axis_shift_plan(grid, a, s * speed[..., a]) for a in range(grid.d)]
        grid._cache[key] = plan
    return plan


def _apply_plan(u, plan, d):
    # slices may carry leading axes (e.g. time); plan indices align on the trailing 2d axes
    lead = u.ndim - 2 * d
    pad = (1,) * lead
    for a, ((i0, w0), (i1, w1)) in enumerate(plan):
        ax = lead + a
        i0 = np.broadcast_to(i0.reshape(pad + i0.shape), u.shape)
        i1 = np.broadcast_to(i1.reshape(pad + i1.shape), u.shape)
        u = (np.take_along_axis(u, i0, axis=ax) * w0.reshape(pad + w0.shape)
             + np.take_along_axis(u, i1, axis=ax) * w1.reshape(pad + w1.shape))
    return u


def shift(u, grid, s):
    """Evaluate ``u(x - s * speed(xi), xi)`` by multilinear interpolation.

    ``u`` is a slice ``(*nx, *nv)`` or a stack with extra leading axes.
    Outside the box the zero (or periodic) extension rule applies.
    """
    u = np.asarray(u, dtype=float)
    if s == 0:
        return u.copy()
    return _apply_plan(u, _shift_plan(grid, s), grid.d)


def free_stream(f0, grid, t, n_steps=1):
    """Free-streamed slice ``f0(x - t xi, xi)``.

    With ``n_steps > 1`` the displacement is applied as ``n_steps`` equal
    interpolated shifts; ``n_steps = k`` with ``t = k * dt`` reproduces the
    discrete transport used by the solver exactly.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    u = np.asarray(f0, dtype=float)
    if u.shape != grid.slice_shape:
        raise ValueError(f"f0 shape {u.shape} != grid slice shape {grid.slice_shape}")
    if t == 0:
        return u.copy()
    ds = t / n_steps
    for _ in range(n_steps):
        u = shift(u, grid, ds)
    return u


def stream_history(f0, grid):
    """Discrete free streaming of ``f0`` at every time node, shape ``field_shape``."""
    out = np.empty(grid.field_shape)
    out[0] = f0
    for k in range(1, grid.nt):
        out[k] = shift(out[k - 1], grid, grid.dt)
    return out


def restrict_to_characteristics(h, t, x, xi):
    """Value of ``h#(t, x, xi) = h(t, x + t * speed(xi), xi)``.

    ``h`` is a :class:`DistributionField`.  Interpolation is linear in time
    between nodes and multilinear in ``(x, xi)``; points outside the
    spatial box use the grid's extension rule.
    """
    grid = h.grid
    if not (0.0 <= t <= grid.t_final * (1 + 1e-12)):
        raise ValueError(f"t={t} outside the time grid [0, {grid.t_final}]")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    c = relativistic_velocity_map(xi) if grid.relativistic else xi
    pos = x + t * c
    if grid.boundary == "periodic":
        lo = np.array([b[0] for b in grid.x_box])
        length = np.array([b[1] - b[0] for b in grid.x_box])
        pos = lo + np.mod(pos - lo, length)
    r = t / grid.dt
    k0 = min(int(np.floor(r)), grid.nt - 1)
    k1 = min(k0 + 1, grid.nt - 1)
    lam = r - k0 if k1 != k0 else 0.0
    point = np.concatenate([pos, xi])[None, :]
    nodes = grid.x_nodes + grid.v_nodes
    vals = []
    for k in (k0, k1):
        data = h.values[k]
        if grid.boundary == "periodic":
            # append the wrapped right-end node so interpolation covers the full period
            nodes_k = list(nodes)
            for a in range(grid.d):
                nodes_k[a] = np.append(nodes[a], grid.x_box[a][1])
                data = np.concatenate([data, np.take(data, [0], axis=a)], axis=a)
            vals.append(interpn(nodes_k, data, point, bounds_error=False, fill_value=0.0)[0])
        else:
            vals.append(interpn(nodes, data, point, bounds_error=False, fill_value=0.0)[0])
    return float((1 - lam) * vals[0] + lam * vals[1])

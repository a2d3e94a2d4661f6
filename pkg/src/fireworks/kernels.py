"""Model inputs: survival ratio, explosion rate, redistribution density, f0.

Each input is a small parametric family so scenarios stay serializable.
Scalar fields (``eta``, ``gamma``, ``f0``) are callables ``(t, x, v)``
where ``x`` and ``v`` carry vector components on their last axis.  The
redistribution density is a function of ``s = -xi . xi1`` sampled into a
row-stochastic (after quadrature) matrix on the velocity nodes.

Tabulated CSV formats
---------------------
Scalar field: header ``[t,]x1..xd,v1..vd,value``; rows must cover a
regular tensor grid (any order).  Values are interpolated linearly and
are zero outside the table.

Redistribution density: header ``s,value`` with ``s = -xi . xi1``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ModelEvaluationError
from .phase_space import PhaseSpaceGrid

SCALAR_KINDS = ("constant", "separable-product", "gaussian-bump", "tabulated")
NORMALIZATION_MODES = ("analytic", "per-row-numeric")


def _per_axis(value, d):
    if value is None:
        return None
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, d)
    if arr.shape != (d,):
        raise ValueError(f"expected {d} per-axis values, got {value!r}")
    return arr


def _gauss_exponent(y, center, width):
    d = y.shape[-1]
    c = _per_axis(0.0 if center is None else center, d)
    w = _per_axis(width, d)
    return -0.5 * np.sum(((y - c) / w) ** 2, axis=-1)


def _load_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.lstrip().startswith("#")))
    header = [h.strip() for h in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    return header, data


@dataclass(frozen=True, eq=False)
class KernelFamily:
    """A parametric scalar field or redistribution density.

    ``kind`` is one of ``constant``, ``separable-product``,
    ``gaussian-bump`` or ``tabulated``; ``parameters`` holds the
    family-specific coefficients; ``normalization_mode`` only matters for
    the redistribution density.
    """

    kind: str
    parameters: dict = field(default_factory=dict)
    normalization_mode: str = "analytic"

    def __post_init__(self):
        if self.kind not in SCALAR_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {SCALAR_KINDS}")
        if self.normalization_mode not in NORMALIZATION_MODES:
            raise ValueError(f"unknown normalization_mode {self.normalization_mode!r}")

    # -- helpers ---------------------------------------------------------------

    def param(self, name, default=None):
        return self.parameters.get(name, default)

    @property
    def time_dependent(self):
        if self.kind == "separable-product":
            return float(self.param("t_rate", 0.0)) != 0.0
        if self.kind == "tabulated":
            return self._table()[0] == "t"
        return False

    def _table(self):
        cache = self.__dict__.get("_table_cache")
        if cache is None:
            if "data" in self.parameters:
                header = list(self.parameters["columns"])
                data = np.asarray(self.parameters["data"], dtype=float)
            else:
                header, data = _load_table(Path(self.parameters["path"]))
            cache = (header[0], header, data)
            object.__setattr__(self, "_table_cache", cache)
        return cache

    # -- scalar fields -------------------------------------------------------------

    def __call__(self, t, x, v):
        """Evaluate as a scalar field at broadcastable ``(t, x, v)``."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], v.shape[:-1])
        if self.kind == "constant":
            return np.full(shape, float(self.param("value")))
        if self.kind == "separable-product":
            expo = np.zeros(shape)
            if self.param("x_width") is not None:
                expo = expo + _gauss_exponent(x, self.param("x_center"), self.param("x_width"))
            if self.param("v_width") is not None:
                expo = expo + _gauss_exponent(v, self.param("v_center"), self.param("v_width"))
            amp = float(self.param("amplitude", 1.0))
            rate = float(self.param("t_rate", 0.0))
            return amp * np.exp(-rate * t) * np.exp(expo)
        if self.kind == "gaussian-bump":
            expo = np.zeros(shape)
            if self.param("x_width") is not None:
                expo = expo + _gauss_exponent(x, self.param("x_center"), self.param("x_width"))
            if self.param("v_width") is not None:
                expo = expo + _gauss_exponent(v, self.param("v_center"), self.param("v_width"))
            return float(self.param("base", 0.0)) + float(self.param("amplitude", 1.0)) * np.exp(expo)
        return self._tabulated_scalar(t, x, v, shape)

    def _tabulated_scalar(self, t, x, v, shape):
        first, header, data = self._table()
        coords = data[:, :-1]
        axes = [np.unique(coords[:, j]) for j in range(coords.shape[1])]
        key = "_interp"
        interp = self.__dict__.get(key)
        if interp is None:
            values = np.zeros([len(a) for a in axes])
            idx = tuple(np.searchsorted(a, coords[:, j]) for j, a in enumerate(axes))
            values[idx] = data[:, -1]
            interp = RegularGridInterpolator(axes, values, bounds_error=False, fill_value=0.0)
            object.__setattr__(self, key, interp)
        xb = np.broadcast_to(x, shape + (x.shape[-1],))
        vb = np.broadcast_to(v, shape + (v.shape[-1],))
        parts = [xb, vb]
        if first == "t":
            parts.insert(0, np.full(shape + (1,), float(t)))
        pts = np.concatenate(parts, axis=-1)
        return interp(pts.reshape(-1, pts.shape[-1])).reshape(shape)

    # -- redistribution density -------------------------------------------------------

    def density(self, s, grid=None):
        """Unnormalized density as a function of ``s = -xi . xi1``."""
        s = np.asarray(s, dtype=float)
        if self.kind == "constant":
            value = self.param("value")
            if value is None:
                if grid is None:
                    raise ValueError("constant density without a value needs a grid")
                value = 1.0 / grid.v_volume
            return np.full(s.shape, float(value))
        if self.kind == "separable-product":
            # exp(kappa xi.xi1) factorizes over the axes
            kappa = float(self.param("kappa", 0.0))
            return float(self.param("amplitude", 1.0)) * np.exp(-kappa * s)
        if self.kind == "gaussian-bump":
            s0 = float(self.param("center", 0.0))
            w = float(self.param("width", 1.0))
            amp = self.param("amplitude")
            amp = (1.0 / grid.v_volume) if amp is None and grid is not None else float(amp or 1.0)
            return amp * np.exp(-0.5 * ((s - s0) / w) ** 2)
        _, header, data = self._table()
        return np.interp(s, data[:, 0], data[:, 1], left=0.0, right=0.0)

    def p_matrix(self, grid: PhaseSpaceGrid):
        """Sample ``P[i, j] = P(-xi_i . xi_j)`` on flattened velocity nodes.

        In ``per-row-numeric`` mode every row is rescaled so its quadrature
        over ``xi_j`` is exactly one.  In ``analytic`` mode the family's own
        normalization is used: the ``separable-product`` (exponential tilt)
        family divides by its closed-form box integral.
        """
        v = grid.v_points()
        s = -(v @ v.T)
        p = self.density(s, grid)
        if self.normalization_mode == "per-row-numeric":
            w = grid.v_weights.reshape(-1)
            row = p @ w
            return p / row[:, None]
        if self.kind == "separable-product" and self.param("amplitude") is None:
            kappa = float(self.param("kappa", 0.0))
            z = np.ones(len(v))
            for a, (lo, hi) in enumerate(grid.v_box):
                k = kappa * v[:, a]
                small = np.abs(k) < 1e-12
                ks = np.where(small, 1.0, k)
                z *= np.where(small, hi - lo, (np.exp(ks * hi) - np.exp(ks * lo)) / ks)
            return p / z[:, None]
        return p


def family(kind, normalization_mode="analytic", **parameters):
    """Shorthand constructor: ``family("constant", value=0.5)``."""
    return KernelFamily(kind, dict(parameters), normalization_mode)


@dataclass(frozen=True)
class KernelSet:
    """The model data ``eta``, ``gamma``, ``p_kernel``, ``f0``."""

    eta: KernelFamily
    gamma: KernelFamily
    p_kernel: KernelFamily
    f0: KernelFamily

    @property
    def time_dependent(self):
        return self.eta.time_dependent or self.gamma.time_dependent

    def scaled(self, eta_factor=1.0, f0_factor=1.0):
        """Copy with ``eta`` and/or ``f0`` multiplied by constants."""
        return KernelSet(_scale(self.eta, eta_factor), self.gamma, self.p_kernel,
                         _scale(self.f0, f0_factor))


def _scale(fam, c):
    if c == 1.0:
        return fam
    p = dict(fam.parameters)
    if fam.kind == "constant":
        p["value"] = c * float(p["value"])
        return KernelFamily(fam.kind, p, fam.normalization_mode)
    if fam.kind == "separable-product":
        p["amplitude"] = c * float(p.get("amplitude", 1.0))
        return KernelFamily(fam.kind, p, fam.normalization_mode)
    if fam.kind == "gaussian-bump":
        p["base"] = c * float(p.get("base", 0.0))
        p["amplitude"] = c * float(p.get("amplitude", 1.0))
        return KernelFamily(fam.kind, p, fam.normalization_mode)
    first, header, data = fam._table()
    data = data.copy()
    data[:, -1] *= c
    return KernelFamily("tabulated", {"columns": header, "data": data.tolist()},
                        fam.normalization_mode)


@dataclass(frozen=True)
class KernelSample:
    """Kernels sampled at one time on the grid nodes.

    ``eta``, ``gamma`` and ``f0`` have the slice shape ``(*nx, *nv)``;
    ``p`` is ``(n_v, n_v)`` with rows indexed by the post-explosion
    velocity ``xi`` and columns by ``xi1``.
    """

    t: float
    eta: np.ndarray
    gamma: np.ndarray
    p: np.ndarray
    f0: np.ndarray


def _check_finite(name, arr):
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = np.argwhere(bad)[0]
        raise ModelEvaluationError(name, idx, arr[tuple(idx)])


def _scalar_on_grid(fam, t, grid, name):
    vals = np.broadcast_to(fam(t, grid.x_mesh(), grid.v_mesh()), grid.slice_shape)
    vals = np.array(vals, dtype=float)
    _check_finite(name, vals)
    return vals


def eval_kernels(kernel_set: KernelSet, t, grid: PhaseSpaceGrid):
    """Sample all model inputs at time ``t`` on the grid nodes."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    eta = _scalar_on_grid(kernel_set.eta, t, grid, "eta")
    gamma = _scalar_on_grid(kernel_set.gamma, t, grid, "gamma")
    f0 = _scalar_on_grid(kernel_set.f0, 0.0, grid, "f0")
    p = p_matrix(kernel_set, grid)
    return KernelSample(float(t), eta, gamma, p, f0)


def p_matrix(kernel_set, grid):
    key = ("p", repr(kernel_set.p_kernel))
    p = grid._cache.get(key)
    if p is None:
        p = kernel_set.p_kernel.p_matrix(grid)
        _check_finite("p_kernel", p)
        grid._cache[key] = p
    return p


@dataclass
class KernelStack:
    """``eta`` and ``gamma`` over all time nodes plus ``p`` and ``f0``.

    Time-independent families are stored once and broadcast over time.
    """

    eta: np.ndarray
    gamma: np.ndarray
    p: np.ndarray
    f0: np.ndarray
    grid: PhaseSpaceGrid

    def at(self, k):
        return KernelSample(k * self.grid.dt, self.eta[k], self.gamma[k], self.p, self.f0)


def sample_kernels(kernel_set: KernelSet, grid: PhaseSpaceGrid):
    """Sample kernels at every time node of ``grid``."""
    first = eval_kernels(kernel_set, 0.0, grid)
    shape = grid.field_shape
    if kernel_set.time_dependent:
        eta = np.empty(shape)
        gamma = np.empty(shape)
        for k, t in enumerate(grid.times):
            eta[k] = _scalar_on_grid(kernel_set.eta, t, grid, "eta")
            gamma[k] = _scalar_on_grid(kernel_set.gamma, t, grid, "gamma")
    else:
        eta = np.broadcast_to(first.eta, shape)
        gamma = np.broadcast_to(first.gamma, shape)
    return KernelStack(eta, gamma, first.p, first.f0, grid)


# ---- admissibility ------------------------------------------------------------


@dataclass
class ConditionResult:
    name: str
    passed: bool
    value: float
    location: tuple | None = None
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "value": float(self.value),
                "location": None if self.location is None else [float(c) for c in self.location],
                "detail": self.detail}


@dataclass
class AdmissibilityReport:
    conditions: list

    @property
    def passed(self):
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name):
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c for c in self.conditions if not c.passed]

    def to_dict(self):
        return {"passed": self.passed, "conditions": [c.to_dict() for c in self.conditions]}


def _node_coords(grid, flat_index, with_time=None):
    idx = np.unravel_index(flat_index, grid.slice_shape)
    xs = [grid.x_nodes[a][idx[a]] for a in range(grid.d)]
    vs = [grid.v_nodes[a][idx[grid.d + a]] for a in range(grid.d)]
    coords = xs + vs
    if with_time is not None:
        coords = [with_time] + coords
    return tuple(float(c) for c in coords)


def _bounds_check(name, fam, grid, times):
    worst_val, worst_loc, worst_excess = 0.0, None, -np.inf
    lo_val, hi_val = np.inf, -np.inf
    for t in (times if fam.time_dependent else times[:1]):
        vals = _scalar_on_grid(fam, t, grid, name)
        excess = np.maximum(vals - 1.0, -vals)
        j = int(np.argmax(excess))
        if excess.flat[j] > worst_excess:
            worst_excess = float(excess.flat[j])
            worst_val = float(vals.flat[j])
            worst_loc = _node_coords(grid, j, t)
        lo_val = min(lo_val, float(vals.min()))
        hi_val = max(hi_val, float(vals.max()))
    passed = lo_val >= 0.0 and hi_val <= 1.0
    return ConditionResult(f"{name}_bounds", passed, worst_val, worst_loc,
                           f"min {name} = {lo_val:.6g}, max {name} = {hi_val:.6g}; required in [0, 1]")


def check_admissibility(kernel_set: KernelSet, grid: PhaseSpaceGrid, tol=1e-8):
    """Check the physical conditions on the sampled model inputs.

    Violations are reported, never raised.  ``tol`` is the allowed
    deviation of each redistribution row quadrature from one.
    """
    times = grid.times
    out = [_bounds_check("eta", kernel_set.eta, grid, times),
           _bounds_check("gamma", kernel_set.gamma, grid, times)]

    p = p_matrix(kernel_set, grid)
    vp = grid.v_points()
    j = int(np.argmin(p))
    i, k = np.unravel_index(j, p.shape)
    out.append(ConditionResult(
        "p_nonnegative", bool(p.min() >= 0.0), float(p.min()),
        tuple(vp[i]) + tuple(vp[k]), "minimum of P over velocity pairs"))

    rows = p @ grid.v_weights.reshape(-1)
    dev = rows - 1.0
    i = int(np.argmax(np.abs(dev)))
    out.append(ConditionResult(
        "p_normalized", bool(np.abs(dev).max() <= tol), float(rows[i]), tuple(vp[i]),
        f"worst row quadrature {rows[i]:.12g} (deficit {-dev[i]:.6g}, tol {tol:g})"))

    f0 = _scalar_on_grid(kernel_set.f0, 0.0, grid, "f0")
    j = int(np.argmin(f0))
    out.append(ConditionResult("f0_nonnegative", bool(f0.min() >= 0.0), float(f0.min()),
                               _node_coords(grid, j), "minimum of f0"))
    mass = float(np.sum(np.abs(f0) * grid.weights))
    out.append(ConditionResult("f0_finite_mass", bool(np.isfinite(mass)), mass, None,
                               "quadrature of |f0| over the box"))
    return AdmissibilityReport(out)


@dataclass
class DeltaEstimate:
    delta: float
    satisfied: bool
    location: tuple

    def to_dict(self):
        return {"delta": self.delta, "satisfied": self.satisfied,
                "location": [float(c) for c in self.location]}


def delta_field(eta, p, grid):
    """``sum_xi w(xi) eta(x, xi) P(xi, xi1)`` for every ``(x, xi1)``."""
    eta2 = np.asarray(eta).reshape(grid.n_x, grid.n_v)
    wp = grid.v_weights.reshape(-1)[:, None] * p
    return eta2 @ wp


def estimate_delta(kernel_set: KernelSet, grid: PhaseSpaceGrid, t_samples):
    """Largest velocity quadrature of ``eta * P`` over sampled ``(t, x, xi1)``.

    The result satisfies the strict-loss condition when it is below one.
    """
    t_samples = list(np.atleast_1d(t_samples)) if t_samples is not None else []
    if len(t_samples) == 0:
        raise ValueError("t_samples must not be empty")
    p = p_matrix(kernel_set, grid)
    best, loc = -np.inf, None
    samples = t_samples if kernel_set.eta.time_dependent else t_samples[:1]
    for t in samples:
        eta = _scalar_on_grid(kernel_set.eta, t, grid, "eta")
        dfield = delta_field(eta, p, grid)
        j = int(np.argmax(dfield))
        if dfield.flat[j] > best:
            best = float(dfield.flat[j])
            ix, iv = np.unravel_index(j, dfield.shape)
            xs = np.unravel_index(ix, grid.nx)
            x = [grid.x_nodes[a][xs[a]] for a in range(grid.d)]
            loc = (float(t),) + tuple(float(c) for c in x) + tuple(grid.v_points()[iv])
    return DeltaEstimate(best, best < 1.0, loc)

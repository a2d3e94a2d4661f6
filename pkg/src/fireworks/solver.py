"""Contraction mappings, weighted norms and Picard iteration.

Both mappings are evaluated along the solver's discrete characteristics:
one interpolated shift per time step, with the time integrals taken by the
composite trapezoidal rule on the time nodes.  For a source ``S`` the
loss-form mapping ``J`` advances

    u[k+1] = shift(u[k] + dt/2 S[k]) + dt/2 S[k+1],     S = gain(f) - gamma f

and the exponential-form mapping ``J_plus`` advances

    u[k+1] = E[k+1] shift(E[k] (u[k] + dt/2 g[k])) + dt/2 g[k+1],
    E = exp(-dt/2 gamma),  g = gain(f),

which is the trapezoidal rule for ``exp(-int gamma)`` and for the
attenuated gain integral at once.  Every factor in ``J_plus`` is
nonnegative, so it maps nonnegative fields to nonnegative fields.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError, NumericalBlowupError, ValidityError
from .kernels import KernelSet, KernelStack, sample_kernels
from .phase_space import DistributionField, PhaseSpaceGrid, l1_norm, shift, stream_history

MAPPINGS = ("J", "J_plus")
# contraction factor numerator and norm-ball multiplier per mapping
_BOUND_NUMERATOR = {"J": 2.0, "J_plus": 1.0}
_RADIUS_FACTOR = {"J": 0.5, "J_plus": 1.0}
_THRESHOLD = {"J": 2.0, "J_plus": 1.0}
DEFAULT_A = {"J": 4.0, "J_plus": 2.0}
RATIO_TOLERANCE = 0.05


def _stack(kernels, grid):
    if isinstance(kernels, KernelStack):
        return kernels
    if isinstance(kernels, KernelSet):
        return sample_kernels(kernels, grid)
    raise TypeError(f"expected KernelSet or KernelStack, got {type(kernels).__name__}")


def _values(f, grid):
    vals = f.values if isinstance(f, DistributionField) else np.asarray(f, dtype=float)
    if vals.shape != grid.field_shape:
        raise ValueError(f"field shape {vals.shape} != {grid.field_shape}")
    return vals


def gain_term(f_slice, eta, gamma, p, grid):
    """Gain ``eta(x, xi) * sum_j w_j gamma(x, xi_j) P(xi, xi_j) f(x, xi_j)``.

    Arrays may carry leading axes (e.g. a time axis); ``p`` is the
    ``(n_v, n_v)`` redistribution matrix.
    """
    f_slice = np.asarray(f_slice, dtype=float)
    lead = f_slice.shape[: f_slice.ndim - 2 * grid.d]
    if f_slice.shape[len(lead):] != grid.slice_shape:
        raise ValueError(f"slice shape {f_slice.shape} does not end with {grid.slice_shape}")
    pw = p * grid.v_weights.reshape(1, -1)
    gf = (gamma * f_slice).reshape(lead + (grid.n_x, grid.n_v))
    return eta * (gf @ pw.T).reshape(f_slice.shape)


def _check_finite(u):
    finite = np.isfinite(u.reshape(u.shape[0], -1)).all(axis=1)
    if not finite.all():
        raise NumericalBlowupError(int(np.argmin(finite)))


def _sweep_loss_form(source, f0, grid):
    h = 0.5 * grid.dt
    u = np.empty(grid.field_shape)
    u[0] = f0
    for k in range(grid.nt - 1):
        u[k + 1] = shift(u[k] + h * source[k], grid, grid.dt) + h * source[k + 1]
    _check_finite(u)
    return u


def _sweep_exponential_form(gain, gamma, f0, grid):
    h = 0.5 * grid.dt
    u = np.empty(grid.field_shape)
    u[0] = f0
    for k in range(grid.nt - 1):
        carried = np.exp(-h * gamma[k]) * (u[k] + h * gain[k])
        u[k + 1] = np.exp(-h * gamma[k + 1]) * shift(carried, grid, grid.dt) + h * gain[k + 1]
    _check_finite(u)
    return u


def apply_J(f, kernels, grid: PhaseSpaceGrid, f0=None):
    """Loss-form mapping: ``f0# - int (gamma f)# + int gain(f)#``."""
    ks = _stack(kernels, grid)
    vals = _values(f, grid)
    f0 = ks.f0 if f0 is None else np.asarray(f0, dtype=float)
    source = gain_term(vals, ks.eta, ks.gamma, ks.p, grid) - ks.gamma * vals
    return DistributionField(_sweep_loss_form(source, f0, grid), grid)


def apply_J_plus(f, kernels, grid: PhaseSpaceGrid, f0=None):
    """Exponential-form mapping; requires and preserves ``f >= 0``."""
    ks = _stack(kernels, grid)
    vals = _values(f, grid)
    if vals.min() < 0:
        raise ValidityError(f"J_plus needs a nonnegative field, min = {vals.min():.3e}")
    f0 = ks.f0 if f0 is None else np.asarray(f0, dtype=float)
    gain = gain_term(vals, ks.eta, ks.gamma, ks.p, grid)
    return DistributionField(_sweep_exponential_form(gain, ks.gamma, f0, grid), grid)


def weighted_norm(f, a, grid=None):
    """``max_k exp(-a t_k) ||f(t_k)||_1`` over the time nodes."""
    if a <= 0:
        raise ValueError("a must be positive")
    if isinstance(f, DistributionField):
        grid = f.grid
        vals = f.values
    else:
        vals = np.asarray(f, dtype=float)
    return float(np.max(np.exp(-a * grid.times) * l1_norm(vals, grid)))


@dataclass(frozen=True)
class WeightedNormParams:
    """Weight rate ``a`` and norm-ball radius ``A`` of the iteration space."""

    a: float
    A: float

    @classmethod
    def for_mapping(cls, mapping, a, f0_mass):
        """Radius ``(a/2) ||f0||_1`` for ``J`` and ``a ||f0||_1`` for ``J_plus``."""
        _check_mapping(mapping)
        return cls(float(a), _RADIUS_FACTOR[mapping] * float(a) * float(f0_mass))


def contraction_bound(mapping, a):
    """Theoretical Lipschitz constant of ``mapping`` in the weighted norm."""
    _check_mapping(mapping)
    return _BOUND_NUMERATOR[mapping] / a


def _check_mapping(mapping):
    if mapping not in MAPPINGS:
        raise ValueError(f"mapping must be one of {MAPPINGS}, got {mapping!r}")


@dataclass
class IterationDiagnostics:
    """Per-iteration record of a Picard run."""

    mapping: str
    a: float
    radius: float
    bound: float
    residual_history: list = field(default_factory=list)
    contraction_ratios: list = field(default_factory=list)
    iterate_norms: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    @property
    def max_ratio(self):
        return max(self.contraction_ratios) if self.contraction_ratios else None

    @property
    def within_radius(self):
        """True if every iterate stayed inside the norm ball of radius ``A``."""
        return all(n <= self.radius * (1 + 1e-12) for n in self.iterate_norms)

    def log_residual_slope(self, start=5):
        """Least-squares slope of ``log(residual)`` against iteration from ``start``."""
        r = np.asarray(self.residual_history[start:], dtype=float)
        r = r[r > 0]
        if len(r) < 2:
            return None
        k = np.arange(len(r))
        return float(np.polyfit(k, np.log(r), 1)[0])

    def summary(self):
        return {"mapping": self.mapping, "a": self.a, "radius_A": self.radius,
                "theoretical_ratio": self.bound, "iterations": self.iterations,
                "converged": self.converged,
                "final_residual": self.residual_history[-1] if self.residual_history else None,
                "max_ratio": self.max_ratio, "within_radius": self.within_radius}


def picard_solve(kernels, grid: PhaseSpaceGrid, mapping="J_plus", a=None, tol=1e-10,
                 max_iter=200, f0=None, raise_on_failure=True, callback=None):
    """Iterate ``mapping`` from the free-streamed ``f0`` to its fixed point.

    Stops when the weighted-norm change between iterates drops below
    ``tol``.  Returns ``(DistributionField, IterationDiagnostics)``;
    raises :class:`NonConvergenceError` if ``max_iter`` is reached.
    ``callback(iteration, values)``, if given, sees every iterate.
    """
    _check_mapping(mapping)
    a = DEFAULT_A[mapping] if a is None else float(a)
    if a <= _THRESHOLD[mapping]:
        raise ValueError(f"{mapping} contracts only for a > {_THRESHOLD[mapping]:g}, got a={a:g}")
    ks = _stack(kernels, grid)
    f0 = ks.f0 if f0 is None else np.asarray(f0, dtype=float)
    mass0 = float(l1_norm(f0, grid))
    params = WeightedNormParams.for_mapping(mapping, a, mass0)
    diag = IterationDiagnostics(mapping, a, params.A, contraction_bound(mapping, a))
    step = apply_J if mapping == "J" else apply_J_plus

    if not np.any(f0):
        diag.iterations, diag.converged = 1, True
        diag.residual_history.append(0.0)
        diag.iterate_norms.append(0.0)
        diag.wall_times.append(0.0)
        return DistributionField(np.zeros(grid.field_shape), grid), diag

    current = stream_history(f0, grid)
    t0 = time.perf_counter()
    for it in range(1, max_iter + 1):
        nxt = step(current, ks, grid, f0=f0).values
        if callback is not None:
            callback(it, nxt)
        res = weighted_norm(nxt - current, a, grid)
        diag.residual_history.append(res)
        diag.iterate_norms.append(weighted_norm(nxt, a, grid))
        diag.wall_times.append(time.perf_counter() - t0)
        if len(diag.residual_history) > 1 and diag.residual_history[-2] > 0:
            diag.contraction_ratios.append(res / diag.residual_history[-2])
        diag.iterations = it
        current = nxt
        if res < tol:
            diag.converged = True
            break
    if not diag.converged and raise_on_failure:
        raise NonConvergenceError(diag)
    return DistributionField(current, grid), diag


@dataclass
class LocalContraction:
    ratio: float
    bound: float
    tolerance: float

    @property
    def passed(self):
        return self.ratio <= self.bound + self.tolerance


def local_contraction_check(f, h, kernels, grid: PhaseSpaceGrid, T0, tolerance=RATIO_TOLERANCE):
    """Measured ``max_t ||J f - J h||_1 / max_t ||f - h||_1`` on ``[0, T0]``.

    Compared against the short-time bound ``2 T0``.
    """
    if not 0 < T0 < 0.5:
        raise ValueError(f"the short-time bound needs 0 < T0 < 1/2, got {T0}")
    k0 = grid.time_index(T0)
    sub = grid.with_(nt=k0 + 1)
    ks = _stack(kernels, grid)
    sub_ks = KernelStack(ks.eta[: k0 + 1], ks.gamma[: k0 + 1], ks.p, ks.f0, sub)
    fv = _values(f, grid)[: k0 + 1]
    hv = _values(h, grid)[: k0 + 1]
    denom = float(np.max(l1_norm(fv - hv, sub)))
    if denom == 0:
        raise ValueError("f and h coincide on [0, T0]; the ratio is undefined")
    diff = apply_J(fv, sub_ks, sub).values - apply_J(hv, sub_ks, sub).values
    ratio = float(np.max(l1_norm(diff, sub))) / denom
    return LocalContraction(ratio, 2.0 * T0, tolerance)


def duhamel_consistency(f, kernels, grid: PhaseSpaceGrid, s, t):
    """Max pointwise mismatch of the exponential (Duhamel) identity on ``[s, t]``.

    Starting from ``f(s)`` the attenuated gain of ``f`` is integrated along
    the discrete characteristics up to ``t`` and compared with ``f(t)``.
    """
    ks = _stack(kernels, grid)
    vals = _values(f, grid)
    ks_, kt = grid.time_index(s), grid.time_index(t)
    if kt < ks_:
        raise ValueError("need s <= t")
    if kt == ks_:
        return 0.0
    hstep = 0.5 * grid.dt
    u = vals[ks_].copy()
    for k in range(ks_, kt):
        g0 = gain_term(vals[k], ks.eta[k], ks.gamma[k], ks.p, grid)
        g1 = gain_term(vals[k + 1], ks.eta[k + 1], ks.gamma[k + 1], ks.p, grid)
        carried = np.exp(-hstep * ks.gamma[k]) * (u + hstep * g0)
        u = np.exp(-hstep * ks.gamma[k + 1]) * shift(carried, grid, grid.dt) + hstep * g1
    return float(np.max(np.abs(vals[kt] - u)))

"""Mass functionals, decay inequalities, the free-motion limit and weak residuals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidityError
from .kernels import KernelSet, KernelStack, estimate_delta, sample_kernels
from .phase_space import DistributionField, PhaseSpaceGrid, l1_norm, quadrature, shift, stream_history
from .solver import gain_term


def _stack(kernels, grid):
    return kernels if isinstance(kernels, KernelStack) else sample_kernels(kernels, grid)


def _delta(kernels, grid, delta):
    if delta is not None:
        return float(delta)
    if not isinstance(kernels, KernelSet):
        raise ValueError("pass delta explicitly when kernels are pre-sampled")
    return estimate_delta(kernels, grid, grid.times).delta


def cumulative_trapezoid(y, dt):
    """``int_0^{t_k} y`` by the trapezoidal rule at every node (starts at 0)."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]))
    return out


@dataclass
class MassTrace:
    """Mass and loss-weighted mass per time node, with inequality slacks.

    ``ineq01_slack[k] = -(M[k+1] - M[k]) / dt - (1 - delta) G[k]`` and
    ``ineq02_slack[k] = (delta - 1) int_0^{t_k} G + M[0] - M[k]``; both
    should be nonnegative up to ``tol_rate = eps_quad M0 max(max gamma, 1/T)``
    and ``tol_mass = eps_quad M0``.  The last entry of ``ineq01_slack`` is NaN.
    """

    times: np.ndarray
    mass: np.ndarray
    gamma_weighted_mass: np.ndarray
    delta: float
    ineq01_slack: np.ndarray
    ineq02_slack: np.ndarray
    tol_rate: float
    tol_mass: float

    @property
    def ineq01_holds(self):
        return bool(np.all(self.ineq01_slack[:-1] >= -self.tol_rate))

    @property
    def ineq02_holds(self):
        return bool(np.all(self.ineq02_slack >= -self.tol_mass))

    @property
    def non_increasing(self):
        return bool(np.all(np.diff(self.mass) <= self.tol_mass))


def mass_trace(f: DistributionField, kernels, grid: PhaseSpaceGrid, delta=None):
    """Mass history and the discrete forms of the two decay inequalities."""
    ks = _stack(kernels, grid)
    vals = f.values
    mass0 = float(l1_norm(vals[0], grid))
    eps = grid.eps_quad()
    if vals.min() < -eps * max(float(np.abs(vals).max()), 1e-300):
        raise ValidityError(f"field has negative values down to {vals.min():.3e}")
    delta = _delta(kernels, grid, delta)
    mass = quadrature(vals, grid.weights)
    gmass = quadrature(ks.gamma * vals, grid.weights)
    s01 = np.full(grid.nt, np.nan)
    s01[:-1] = -(np.diff(mass) / grid.dt) - (1.0 - delta) * gmass[:-1]
    s02 = (delta - 1.0) * cumulative_trapezoid(gmass, grid.dt) + mass[0] - mass
    # rate scale: the fastest loss rate, or 1/T when nothing explodes
    rate = max(float(np.max(ks.gamma)), 1.0 / grid.t_final)
    return MassTrace(grid.times, mass, gmass, delta, s01, s02, eps * mass0 * rate, eps * mass0)


@dataclass
class FreeMotionLimit:
    """Free-streaming field approached by the solution, plus its tail estimate."""

    field: DistributionField
    profile: np.ndarray      # f_inf at t = 0 (its value along every characteristic)
    tail: float


def _source(vals, ks, grid):
    return gain_term(vals, ks.eta, ks.gamma, ks.p, grid) - ks.gamma * vals


def tail_allowance(gmass_final, delta, gamma, grid):
    """Truncated-tail estimate ``(1+delta) G(T) / ((1-delta) min gamma>0)``."""
    pos = np.asarray(gamma)[np.asarray(gamma) > 0]
    if gmass_final == 0 or pos.size == 0:
        return 0.0
    if delta >= 1:
        return float("inf")
    return float((1 + delta) * gmass_final / ((1 - delta) * pos.min()))


def free_motion_limit(f: DistributionField, kernels, grid: PhaseSpaceGrid, delta=None):
    """Free-motion field with the infinite time integrals cut at the horizon.

    The gain-minus-loss source of ``f`` is pulled back along the discrete
    characteristics to ``t = 0`` and added to ``f0``; the resulting profile
    is then streamed freely, so ``f_inf#`` is constant in time.
    """
    ks = _stack(kernels, grid)
    vals = f.values
    source = _source(vals, ks, grid)
    h = 0.5 * grid.dt
    acc = h * source[-1]
    for m in range(grid.nt - 2, -1, -1):
        acc = shift(acc, grid, -grid.dt) + (h if m == 0 else grid.dt) * source[m]
    profile = vals[0] + acc
    finf = DistributionField(stream_history(profile, grid), grid)
    delta = _delta(kernels, grid, delta)
    gmass = quadrature(ks.gamma[-1] * vals[-1], grid.weights)
    return FreeMotionLimit(finf, profile, tail_allowance(gmass, delta, ks.gamma, grid))


@dataclass
class AsymptoticBound:
    t: float
    lhs: float
    rhs: float
    tolerance: float

    @property
    def passed(self):
        return self.lhs <= self.rhs + self.tolerance


def asymptotic_bound_check(f: DistributionField, f_inf: FreeMotionLimit, kernels,
                           grid: PhaseSpaceGrid, t, delta=None):
    """``||f(t) - f_inf(t)||_1`` against ``(1+delta) int_t^T G + tail``."""
    k = grid.time_index(t)
    table = asymptotic_table(f, f_inf, kernels, grid, delta)
    return AsymptoticBound(float(grid.times[k]), float(table["lhs"][k]),
                           float(table["rhs"][k]), table["tolerance"])


def asymptotic_table(f, f_inf, kernels, grid, delta=None):
    """Distance to the free-motion limit and its bound at every node."""
    ks = _stack(kernels, grid)
    delta = _delta(kernels, grid, delta)
    gmass = quadrature(ks.gamma * f.values, grid.weights)
    cum = cumulative_trapezoid(gmass, grid.dt)
    rhs = (1 + delta) * (cum[-1] - cum) + f_inf.tail
    lhs = l1_norm(f.values - f_inf.field.values, grid)
    tol = grid.eps_quad() * float(l1_norm(f.values[0], grid))
    return {"lhs": lhs, "rhs": rhs, "tolerance": tol, "delta": delta,
            "non_increasing": bool(np.all(np.diff(lhs) <= tol))}


# ---- weak form -------------------------------------------------------------


def _bump(s):
    inside = np.abs(s) < 1
    return np.where(inside, (1 - s * s) ** 3, 0.0)


def _dbump(s):
    inside = np.abs(s) < 1
    return np.where(inside, -6 * s * (1 - s * s) ** 2, 0.0)


@dataclass(frozen=True)
class BumpTestFunction:
    """Separable ``(1 - s^2)^3`` bump over ``(t, x, xi)``.

    Supported on ``|t - t_c| < t_w`` and per-axis boxes around the centers.
    The time support may include ``t = 0`` (the initial datum then enters
    the weak form) but must end before the horizon.
    """

    t_center: float
    t_width: float
    x_center: tuple
    x_width: tuple
    v_center: tuple
    v_width: tuple

    def _factors(self, grid):
        t = grid.times
        st = (t - self.t_center) / self.t_width
        ft, dft = _bump(st), _dbump(st) / self.t_width
        fx, dfx = [], []
        for a, xs in enumerate(grid.x_nodes):
            s = (xs - self.x_center[a]) / self.x_width[a]
            fx.append(_bump(s))
            dfx.append(_dbump(s) / self.x_width[a])
        fv = [_bump((vs - self.v_center[a]) / self.v_width[a]) for a, vs in enumerate(grid.v_nodes)]
        return ft, dft, fx, dfx, fv

    def check_support(self, grid):
        if self.t_center + self.t_width >= grid.t_final:
            raise ValueError("test function support reaches the time horizon")
        for a in range(grid.d):
            lo, hi = grid.x_box[a]
            if self.x_center[a] - self.x_width[a] <= lo or self.x_center[a] + self.x_width[a] >= hi:
                raise ValueError(f"test function touches the spatial boundary on axis {a}")
            lo, hi = grid.v_box[a]
            if self.v_center[a] - self.v_width[a] <= lo or self.v_center[a] + self.v_width[a] >= hi:
                raise ValueError(f"test function touches the velocity boundary on axis {a}")

    def evaluate(self, grid):
        """Return ``phi`` and ``dphi/dt + speed . grad_x phi`` on the full grid."""
        ft, dft, fx, dfx, fv = self._factors(grid)
        d = grid.d

        def outer(parts):
            out = parts[0]
            for p in parts[1:]:
                out = np.multiply.outer(out, p)
            return out

        space = outer(fx)
        vel = outer(fv)
        phi_xv = np.multiply.outer(space, vel)
        phi = np.multiply.outer(ft, phi_xv)
        speed = grid.speed()
        transport = np.zeros(grid.slice_shape)
        for a in range(d):
            parts = [dfx[b] if b == a else fx[b] for b in range(d)]
            grad = np.multiply.outer(outer(parts), vel)
            transport += grad * speed[..., a].reshape((1,) * d + grid.nv)
        dphi = np.multiply.outer(dft, phi_xv) + np.multiply.outer(ft, transport)
        return phi, dphi


def shipped_test_functions(grid: PhaseSpaceGrid):
    """Three bumps at different scales, all strictly inside the grid."""
    T = grid.t_final
    xc = tuple(0.5 * (lo + hi) for lo, hi in grid.x_box)
    xl = tuple(hi - lo for lo, hi in grid.x_box)
    vc = tuple(0.5 * (lo + hi) for lo, hi in grid.v_box)
    vl = tuple(hi - lo for lo, hi in grid.v_box)
    return [
        BumpTestFunction(0.0, 0.5 * T, xc, tuple(0.3 * l for l in xl), vc, tuple(0.4 * l for l in vl)),
        BumpTestFunction(0.4 * T, 0.3 * T, tuple(c + 0.05 * l for c, l in zip(xc, xl)),
                         tuple(0.2 * l for l in xl), tuple(c + 0.1 * l for c, l in zip(vc, vl)),
                         tuple(0.25 * l for l in vl)),
        BumpTestFunction(0.6 * T, 0.35 * T, tuple(c - 0.05 * l for c, l in zip(xc, xl)),
                         tuple(0.35 * l for l in xl), vc, tuple(0.45 * l for l in vl)),
    ]


@dataclass
class WeakResidual:
    value: float
    scale: float

    @property
    def relative(self):
        return self.value / self.scale if self.scale > 0 else 0.0


def weak_residual(f: DistributionField, kernels, grid: PhaseSpaceGrid, test_fn, f0=None):
    """Distributional residual of ``f`` against one test function.

    ``|int f (phi_t + xi . grad phi) + int Q[f] phi + int f0 phi(0)|`` with
    ``Q[f] = gain - gamma f``.  ``scale`` is the same sum taken over the
    absolute values of the integrands, so ``relative`` is dimensionless and
    does not shrink when individual terms happen to be small.
    """
    test_fn.check_support(grid)
    ks = _stack(kernels, grid)
    vals = f.values
    f0 = ks.f0 if f0 is None else np.asarray(f0)
    phi, dphi = test_fn.evaluate(grid)
    wt = np.full(grid.nt, grid.dt)
    wt[0] = wt[-1] = 0.5 * grid.dt
    w = grid.weights

    def integrate(arr):
        return float(np.sum(wt * quadrature(arr, w)))

    source = _source(vals, ks, grid)
    value = abs(integrate(vals * dphi) + integrate(source * phi)
                + float(quadrature(f0 * phi[0], w)))
    scale = (integrate(np.abs(vals * dphi)) + integrate(np.abs(source * phi))
             + float(quadrature(np.abs(f0 * phi[0]), w)))
    return WeakResidual(value, scale)

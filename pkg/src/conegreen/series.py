"""Generating functions of the killed walk and their torus quadrature.

``calP(x) = sum_m x^m mu(m)`` is the step transform, ``H_k`` the generating
function of the Green row ``G(k, .)`` and ``F_k`` that of the exit law. On
polyannuli ``|x_i| = r_i`` with ``calP(r) < 1`` they satisfy

    H_k(x) (1 - calP(x)) = x^k - F_k(x),

so each Green value is a Laurent coefficient of ``(x^k - F_k(x)) / (1 - calP(x))``.
Coefficients are extracted with the equispaced trapezoid rule (an FFT),
which converges geometrically for these analytic periodic integrands.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .genfun import find_interior_min
from .green import ExitLaw, KilledWalkDP, run_killed_dp
from .model import JumpMeasure, LatticeWindow, WalkModel, as_lattice_point

GRID_MARGIN = 1e-9


class PowerSum(NamedTuple):
    """A truncated power series value and the mass its truncation dropped."""

    value: complex
    truncation_mass: float


def eval_calp(measure: JumpMeasure, x) -> complex | np.ndarray:
    """``sum_m x^m mu(m)`` over the last axis of a complex array ``x``."""
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] != measure.dimension:
        raise DomainError("point dimension does not match the measure")
    terms = np.prod(x[..., None, :] ** measure.step_array, axis=-1)
    out = terms @ measure.prob_array
    return complex(out) if out.ndim == 0 else out


def _monomials(points: np.ndarray, coefs: np.ndarray, x: np.ndarray) -> complex:
    if len(points) == 0:
        return 0j
    return complex(np.sum(coefs * np.prod(x[None, :] ** points, axis=1)))


def eval_f_truncated(exitlaw: ExitLaw, x) -> PowerSum:
    """Truncated ``F_k(x) = E_k(x^Z(tau); tau < inf)``."""
    x = np.asarray(x, dtype=complex).reshape(-1)
    return PowerSum(_monomials(exitlaw.points, exitlaw.probs, x), exitlaw.truncation_bound)


def eval_h_truncated(table: KilledWalkDP, x) -> PowerSum:
    """Truncated ``H_k(x) = sum_m G(k, m) x^m`` over the DP window."""
    x = np.asarray(x, dtype=complex).reshape(-1)
    res = table.visits.astype(complex)
    for lo, hi, xi in zip(table.window.lo, table.window.hi, x):
        res = np.tensordot(res, xi ** np.arange(lo, hi + 1), axes=([0], [0]))
    return PowerSum(complex(res), float(np.sum(table.lost_mass)))


@dataclass(frozen=True)
class FEResidual:
    """Functional-equation check at one point.

    ``residual = |H(x)(1 - calP(x)) - x^k + F(x)|`` from DP truncations and
    ``bound`` is the combined truncation allowance it must not exceed.
    """

    residual: float
    bound: float
    h: complex
    f: complex
    calp: complex

    @property
    def ok(self) -> bool:
        return self.residual <= self.bound

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "bound": self.bound,
            "ok": self.ok,
            "H": [self.h.real, self.h.imag],
            "F": [self.f.real, self.f.imag],
            "calP": [self.calp.real, self.calp.imag],
        }


def functional_eq_residual(model: WalkModel, k, x, window: LatticeWindow | int, tol: float = 1e-14) -> FEResidual:
    """Residual of the functional equation at a point of the open domain.

    Raises
    ------
    DomainError
        If ``calP(|x|) >= 1``.
    """
    x = np.asarray(x, dtype=complex).reshape(-1)
    if x.shape[0] != model.dimension:
        raise DomainError("point dimension does not match the model")
    rho = np.abs(x)
    if np.any(rho == 0):
        raise DomainError("x must have nonzero coordinates")
    p_rho = eval_calp(model.measure, rho).real
    if p_rho >= 1.0:
        raise DomainError(f"calP(|x|) = {p_rho:.6g} >= 1: x is outside the convergence domain")
    run = run_killed_dp(model, k, window, tol)
    h = eval_h_truncated(run, x).value
    f = eval_f_truncated(run.exit_law(), x).value
    cp = eval_calp(model.measure, x)
    xk = complex(np.prod(x ** np.array(run.start)))
    res = abs(h * (1 - cp) - xk + f)
    # truncation of H and of F are each at most L(rho) / (1 - calP(rho))
    trunc = run.lost_transform_bound(rho) / (1.0 - p_rho)
    mag_h = eval_h_truncated(run, rho).value.real
    mag_f = eval_f_truncated(run.exit_law(), rho).value.real
    roundoff = 1e-13 * (mag_h * (1 + abs(cp)) + abs(xk) + mag_f)
    bound = (abs(1 - cp) + 1.0) * trunc + roundoff
    return FEResidual(res, bound, h, f, cp)


# --------------------------------------------------------------------------
# torus quadrature


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """Equispaced nodes on the torus ``|x_i| = base_i``."""

    d: int
    n_per_axis: int
    base: np.ndarray

    def __post_init__(self):
        n = int(self.n_per_axis)
        if n < 2 or n & (n - 1):
            raise DomainError("n_per_axis must be a power of two")
        base = np.asarray(self.base, dtype=float).reshape(-1)
        if base.shape != (self.d,) or np.any(base <= 0):
            raise DomainError("base must be a positive d-vector")
        object.__setattr__(self, "base", base)

    @classmethod
    def centred(cls, measure: JumpMeasure, n_per_axis: int = 256) -> "TorusGrid":
        """Grid through ``exp(alpha*)``, the point of D farthest from its boundary in calP."""
        a0 = find_interior_min(measure)
        return cls(measure.dimension, n_per_axis, np.exp(a0))

    def axes(self) -> list[np.ndarray]:
        s = 2 * np.pi * np.arange(self.n_per_axis) / self.n_per_axis
        return [r * np.exp(1j * s) for r in self.base]

    def check(self, measure: JumpMeasure) -> float:
        if self.d != measure.dimension:
            raise DomainError("grid dimension does not match the measure")
        if self.d > 4:
            raise DomainError("torus quadrature supports d <= 4")
        if self.d == 4:
            warnings.warn("4-dimensional torus quadrature is expensive", RuntimeWarning, stacklevel=3)
        p = eval_calp(measure, self.base).real
        if not p < 1.0 - GRID_MARGIN:
            raise DomainError(f"calP(base) = {p!r} is not below 1 - {GRID_MARGIN}")
        return p


def _outer_power_sum(points: np.ndarray, coefs: np.ndarray, axes: list[np.ndarray]) -> np.ndarray:
    """``sum_j coefs_j x^points_j`` on the tensor grid spanned by ``axes``."""
    n = [len(a) for a in axes]
    if len(points) == 0:
        return np.zeros(n, dtype=complex)
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    dense = np.zeros(tuple(hi - lo + 1), dtype=complex)
    np.add.at(dense, tuple((points - lo).T), coefs)
    res = dense
    for a, l, h in zip(axes, lo, hi):
        vander = a[None, :] ** np.arange(l, h + 1)[:, None]
        res = np.tensordot(res, vander, axes=([0], [0]))
    return res


def calp_on_grid(measure: JumpMeasure, grid: TorusGrid) -> np.ndarray:
    """``calP`` at every torus node; on the boundary contour this is phi_u."""
    return _outer_power_sum(measure.step_array, measure.prob_array.astype(complex), grid.axes())


def numerator_on_grid(k, grid: TorusGrid, exitlaw: ExitLaw | None = None) -> np.ndarray:
    """``x^k - F_k(x)`` at every torus node (``x^k`` alone for the free walk)."""
    k = np.array(k, dtype=np.int64).reshape(1, -1)
    out = _outer_power_sum(k, np.ones(1, dtype=complex), grid.axes())
    if exitlaw is not None:
        out = out - _outer_power_sum(exitlaw.points, exitlaw.probs.astype(complex), grid.axes())
    return out


@dataclass(frozen=True, eq=False)
class QuadratureTable:
    """All Laurent coefficients from one FFT; index ``m`` is taken mod n."""

    grid: TorusGrid
    coefs: np.ndarray

    def complex_value(self, m) -> complex:
        m = np.asarray(m, dtype=np.int64).reshape(-1)
        idx = tuple(int(c) % self.grid.n_per_axis for c in m)
        return complex(self.coefs[idx] * math.prod(float(r) ** (-int(c)) for r, c in zip(self.grid.base, m)))

    def value(self, m) -> float:
        return self.complex_value(m).real


def _coefficients(values: np.ndarray, grid: TorusGrid) -> QuadratureTable:
    c = np.fft.fftn(values) / values.size
    return QuadratureTable(grid, c)


def free_green_table(measure: JumpMeasure, k, grid: TorusGrid) -> QuadratureTable:
    grid.check(measure)
    vals = numerator_on_grid(k, grid) / (1.0 - calp_on_grid(measure, grid))
    return _coefficients(vals, grid)


def killed_green_table(model: WalkModel, k, grid: TorusGrid, exitlaw: ExitLaw) -> QuadratureTable:
    grid.check(model.measure)
    if tuple(exitlaw.start) != as_lattice_point(k, model.dimension):
        raise DomainError("exit law was computed for a different start")
    vals = numerator_on_grid(k, grid, exitlaw) / (1.0 - calp_on_grid(model.measure, grid))
    return _coefficients(vals, grid)


def free_green_quadrature(measure: JumpMeasure, k, m, grid: TorusGrid) -> float:
    """Free Green function ``G(k, m)`` by trapezoid quadrature of its Cauchy integral."""
    return free_green_table(measure, k, grid).value(m)


def killed_green_quadrature(model: WalkModel, k, m, grid: TorusGrid, exitlaw: ExitLaw) -> float:
    """Killed Green function from ``(x^k - F_k(x)) / (x^(m+1) (1 - calP(x)))``."""
    return killed_green_table(model, k, grid, exitlaw).value(m)

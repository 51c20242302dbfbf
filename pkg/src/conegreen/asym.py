"""Asymptotics of the killed Green function along rays.

For ``m`` deep in the cone with direction ``u_m = m / |m|``,

    G(k, m) ~ h_{alpha(u_m)}(k) * c(u_m) * (2 pi |m|)^(-(d-1)/2) * exp(-alpha(u_m).m),

with ``c(u)`` built from the twisted drift ``lam = |m(u)|`` and the reduced
covariance ``Q_u``. Two candidate constants are carried:

``paper``
    ``lam^-1 * sqrt(det Q_u)``
``lclt``
    ``lam^((d-3)/2) / sqrt(det Q_u)``, the constant a local limit theorem for
    the twisted walk produces.

They agree in one dimension. :func:`ray_study` measures the empirical
constant and :func:`prefactor_select` decides between them.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import DomainError, UnstableStudyError
from .genfun import BoundaryData, solve_alpha
from .green import (
    DEFAULT_TOL,
    GreenEstimate,
    HarmonicEstimate,
    harmonic_from_dp,
    run_killed_dp,
)
from .model import Cone, LatticeWindow, WalkModel, as_lattice_point, as_point, default_window

Variant = Literal["paper", "lclt"]
VARIANTS: tuple[str, ...] = ("paper", "lclt")
STABILITY_THRESHOLD = 0.05


def prefactor_constant(boundary: BoundaryData, variant: Variant) -> float:
    """Direction-dependent constant ``c(u)`` of a prefactor variant."""
    d = boundary.dimension
    lam = float(boundary.lam)
    det = float(boundary.det_q_reduced)
    if variant == "paper":
        return math.sqrt(det) / lam
    if variant == "lclt":
        return lam ** ((d - 3) / 2) / math.sqrt(det)
    raise DomainError(f"unknown prefactor variant {variant!r}")


def _radial_factor(m: np.ndarray) -> float:
    d = len(m)
    return (2 * math.pi * float(np.linalg.norm(m))) ** (-(d - 1) / 2)


@dataclass(frozen=True, eq=False)
class Prediction:
    """Asymptotic prediction of ``G(k, m)`` under one prefactor variant."""

    value: float
    variant: str
    boundary: BoundaryData
    h_k: float
    k: tuple[int, ...]
    m: tuple[int, ...]

    def recompute(self) -> float:
        m = np.array(self.m, dtype=float)
        return (self.h_k * prefactor_constant(self.boundary, self.variant)
                * _radial_factor(m) * math.exp(-float(self.boundary.alpha @ m)))

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "variant": self.variant,
            "h_k": self.h_k,
            "k": list(self.k),
            "m": list(self.m),
            "boundary": self.boundary.to_dict(),
        }


def predict_green(boundary: BoundaryData, h_k: float, k, m, variant: Variant = "lclt",
                  cone: Cone | None = None) -> Prediction:
    """Evaluate the asymptotic formula at ``m``.

    Parameters
    ----------
    boundary : BoundaryData
        Boundary data solved at ``u_m = m / |m|``.
    h_k : float
        ``h_{alpha(u_m)}(k)``, positive.
    k, m : lattice points
    variant : {"paper", "lclt"}
    cone : Cone, optional
        When given, ``u_m`` must lie in it.

    Raises
    ------
    DomainError
        If ``h_k <= 0``, ``m = 0``, ``boundary`` was solved at another
        direction, or ``u_m`` is outside ``cone``.
    """
    d = boundary.dimension
    k = as_lattice_point(k, d)
    m = as_lattice_point(m, d)
    mv = np.array(m, dtype=float)
    norm = float(np.linalg.norm(mv))
    if norm == 0:
        raise DomainError("m must be nonzero")
    if not h_k > 0:
        raise DomainError("h_k must be positive")
    if np.linalg.norm(mv / norm - boundary.u) > 1e-8:
        raise DomainError("boundary data was not solved at the direction of m")
    if cone is not None and not cone.contains(mv):
        raise DomainError(f"m = {m} is not in the cone")
    value = h_k * prefactor_constant(boundary, variant) * _radial_factor(mv) * math.exp(-float(boundary.alpha @ mv))
    return Prediction(value, variant, boundary, float(h_k), k, m)


def empirical_prefactor(g: float, boundary: BoundaryData, h_k: float, m) -> float:
    """``g * exp(alpha.m) * (2 pi |m|)^((d-1)/2) / h_k``."""
    mv = np.asarray(m, dtype=float)
    return g * math.exp(float(boundary.alpha @ mv)) / _radial_factor(mv) / h_k


@dataclass(frozen=True)
class MartinEstimate:
    """Ratio ``G(k, m) / G(k0, m)`` with a guaranteed enclosure."""

    value: float
    lower: float
    upper: float

    def to_dict(self) -> dict:
        return {"value": self.value, "lower": self.lower, "upper": self.upper}


def martin_kernel(g_km: GreenEstimate, g_k0m: GreenEstimate) -> MartinEstimate:
    """Martin kernel ``G(k, m) / G(k0, m)`` with interval propagation.

    Raises
    ------
    DomainError
        If the denominator interval contains zero.
    """
    lo_n, hi_n = g_km.interval
    lo_d, hi_d = g_k0m.interval
    if not g_k0m.value > 0 or lo_d <= 0:
        raise DomainError("denominator is not certified positive")
    value = g_km.value / g_k0m.value
    lo_n = max(lo_n, 0.0)
    return MartinEstimate(value, lo_n / hi_d, hi_n / lo_d)


def nearest_lattice_point(x, cone: Cone) -> tuple[int, ...]:
    """Closest point of ``Z^d`` inside ``cone`` to ``x``.

    Componentwise rounding first; if that misses the cone, the ``3^d``
    neighbourhood of the rounded point is scanned and the nearest hit wins,
    ties broken lexicographically.

    Raises
    ------
    DomainError
        If no neighbour lies in the cone.
    """
    x = as_point(x)
    base = np.rint(x).astype(np.int64)
    if cone.contains(base.astype(float)):
        return tuple(int(v) for v in base)
    best = None
    for off in itertools.product((-1, 0, 1), repeat=len(x)):
        p = base + np.array(off)
        if not cone.contains(p.astype(float)):
            continue
        key = (float(np.sum((p - x) ** 2)), tuple(int(v) for v in p))
        if best is None or key < best:
            best = key
    if best is None:
        raise DomainError(f"no lattice point of the cone near {x.tolist()}")
    return best[1]


@dataclass(frozen=True)
class WindowPolicy:
    """Window size ``2 * max(radii) + margin``, or a fixed size when given."""

    margin: int = 20
    fixed: int | None = None

    def size(self, radii: Sequence[float]) -> int:
        need = int(math.ceil(2 * max(radii))) + self.margin
        if self.fixed is not None:
            if self.fixed < need:
                raise DomainError(f"window {self.fixed} is below 2*max(R)+margin = {need}")
            return self.fixed
        return need

    def window(self, cone: Cone, radii: Sequence[float]) -> LatticeWindow:
        return default_window(cone, self.size(radii))


@dataclass(frozen=True, eq=False)
class StudyRow:
    R: float
    m: tuple[int, ...]
    g: GreenEstimate
    h: HarmonicEstimate
    boundary: BoundaryData
    pred_paper: float
    pred_lclt: float
    c_emp: float

    def ratio(self, variant: Variant) -> float:
        return self.g.value / (self.pred_paper if variant == "paper" else self.pred_lclt)

    def as_record(self) -> dict:
        rec = {"R": self.R}
        rec.update({f"m_{i + 1}": v for i, v in enumerate(self.m)})
        rec.update({
            "g_value": self.g.value,
            "g_bound": self.g.error.bound,
            "pred_paper": self.pred_paper,
            "pred_lclt": self.pred_lclt,
            "c_emp": self.c_emp,
            "h_k": self.h.value,
        })
        rec.update({f"alpha_{i + 1}": float(a) for i, a in enumerate(self.boundary.alpha)})
        rec["det_q"] = float(self.boundary.det_q_reduced)
        rec["drift_norm"] = float(self.boundary.lam)
        return rec


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass(frozen=True, eq=False)
class StudyTable:
    """Rows of a ray study, sorted by radius."""

    k: tuple[int, ...]
    u: np.ndarray
    rows: tuple[StudyRow, ...]
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def dimension(self) -> int:
        return len(self.k)

    def columns(self) -> list[str]:
        d = self.dimension
        return (["R"] + [f"m_{i + 1}" for i in range(d)]
                + ["g_value", "g_bound", "pred_paper", "pred_lclt", "c_emp", "h_k"]
                + [f"alpha_{i + 1}" for i in range(d)] + ["det_q", "drift_norm"])

    def to_csv(self, stream=None) -> str | None:
        """Write the table as CSV; returns the text when ``stream`` is None."""
        out = io.StringIO() if stream is None else stream
        w = csv.writer(out, lineterminator="\n")
        cols = self.columns()
        w.writerow(cols)
        for row in self.rows:
            rec = row.as_record()
            w.writerow([_fmt(rec[c]) for c in cols])
        return out.getvalue() if stream is None else None

    def c_emp(self) -> np.ndarray:
        return np.array([r.c_emp for r in self.rows])

    def ratio_errors(self, variant: Variant) -> np.ndarray:
        return np.array([abs(r.ratio(variant) - 1.0) for r in self.rows])


def ray_study(
    model: WalkModel,
    k,
    u,
    radii: Sequence[float],
    window_policy: WindowPolicy | None = None,
    tol: float = DEFAULT_TOL,
    seed: int | None = None,
) -> StudyTable:
    """Compare DP Green values with the asymptotic formula along ``R * u``.

    One DP run from ``k`` supplies every ``G(k, m)`` and the exit law for
    ``h``; boundary data and ``h`` are evaluated at each row's own direction
    ``u_m``. ``seed`` is accepted for interface uniformity; the study is
    deterministic.

    Raises
    ------
    DomainError
        If ``u`` is outside the closed cone, radii are not strictly
        increasing and positive, or a row point is not in the cone.
    """
    d = model.dimension
    k = as_lattice_point(k, d)
    u = as_point(u, d)
    nu = float(np.linalg.norm(u))
    if nu == 0:
        raise DomainError("u must be nonzero")
    u = u / nu
    if not model.cone.closure_contains(u, atol=1e-12):
        raise DomainError(f"direction {u.tolist()} is not in the cone")
    radii = [float(r) for r in radii]
    if not radii or radii[0] <= 0 or any(b <= a for a, b in zip(radii, radii[1:])):
        raise DomainError("radii must be positive and strictly increasing")
    if not model.cone.contains(np.array(k, dtype=float)):
        raise DomainError(f"k = {k} is not in the cone")
    policy = window_policy or WindowPolicy()
    window = policy.window(model.cone, radii)
    run = run_killed_dp(model, k, window, tol)
    rows = []
    for R in radii:
        m = nearest_lattice_point(R * u, model.cone)
        if not window.contains(m):
            raise DomainError(f"row point {m} is outside the window")
        mv = np.array(m, dtype=float)
        bd = solve_alpha(model.measure, mv / np.linalg.norm(mv))
        h = harmonic_from_dp(run, bd)
        g = run.estimate(m)
        preds = {v: predict_green(bd, h.value, k, m, v, model.cone).value for v in VARIANTS}
        rows.append(StudyRow(R, m, g, h, bd, preds["paper"], preds["lclt"],
                             empirical_prefactor(g.value, bd, h.value, m)))
    params = {"window": policy.size(radii), "tol": tol, "seed": seed, "n_steps": run.n_steps}
    return StudyTable(k, u, tuple(rows), params)


@dataclass(frozen=True)
class Verdict:
    """Outcome of :func:`prefactor_select`."""

    variant: str
    relative_errors: dict
    c_emp: float
    last_change: float

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "relative_errors": dict(self.relative_errors),
            "c_emp": self.c_emp,
            "last_change": self.last_change,
        }


def prefactor_select(study: StudyTable, threshold: float = STABILITY_THRESHOLD) -> Verdict:
    """Pick the variant whose constant is closest to the last ``c_emp``.

    Raises
    ------
    UnstableStudyError
        With fewer than three rows, or when ``c_emp`` moved by ``threshold``
        or more between the last two rows.
    """
    if len(study) < 3:
        raise UnstableStudyError(f"unstable study: {len(study)} rows, at least 3 needed")
    c = study.c_emp()
    change = abs(c[-1] / c[-2] - 1.0)
    if not change < threshold:
        raise UnstableStudyError(f"unstable study: c_emp changed by {change:.3%} over the last two rows")
    last = study.rows[-1]
    errs = {v: abs(c[-1] / prefactor_constant(last.boundary, v) - 1.0) for v in VARIANTS}
    if study.dimension == 1:
        name = "indistinguishable, d=1"
    else:
        name = min(VARIANTS, key=lambda v: errs[v])
    return Verdict(name, errs, float(c[-1]), float(change))

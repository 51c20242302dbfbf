"""Green functions, exit laws and harmonic functions of the killed walk.

The deterministic route pushes the sub-probability law of the walk forward
on a finite lattice window. Mass that steps out of the cone is recorded as
exit mass; mass that leaves the window while still inside the cone, and the
mass still alive when the iteration stops, is recorded as *lost*. Every
truncation error below is bounded through the lost measure:

* visits to ``m`` after a loss at ``y`` are at most the free Green function
  ``G(y, m) <= r^(y-m) / (1 - P(r))`` for any ``r`` inside D;
* exit functionals after a loss follow from exponential supermartingales.

The Monte Carlo routes are independent oracles for the DP values.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from statistics import NormalDist
from typing import Iterable, Literal

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import ConvergenceError, DomainError, TruncationError
from .genfun import BoundaryData, eval_p_many, interior_points, twisted_measure
from .model import (
    Cone,
    JumpMeasure,
    LatticeWindow,
    WalkModel,
    as_lattice_point,
    default_window,
)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-14
DEFAULT_MAX_STEPS = 200_000
MC_BATCH = 50_000


@dataclass(frozen=True)
class DeterministicError:
    bound: float

    def to_dict(self) -> dict:
        return {"bound": self.bound}


@dataclass(frozen=True)
class MonteCarloError:
    ci_half_width: float
    confidence: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "ci_half_width": self.ci_half_width,
            "confidence": self.confidence,
            "n_samples": self.n_samples,
        }


@dataclass(frozen=True)
class GreenEstimate:
    """Value of G_C(k, m) with its error record.

    For ``method == "dp"`` the value is a certified lower bound and the true
    Green function lies in ``[value, value + error.bound]``.
    """

    value: float
    error: DeterministicError | MonteCarloError
    method: Literal["dp", "mc", "quadrature"]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value >= 0.0:
            raise ValueError("Green estimates are nonnegative")

    @property
    def interval(self) -> tuple[float, float]:
        if isinstance(self.error, DeterministicError):
            if self.method == "dp":
                return self.value, self.value + self.error.bound
            return self.value - self.error.bound, self.value + self.error.bound
        h = self.error.ci_half_width
        return self.value - h, self.value + h

    @property
    def spread(self) -> float:
        if isinstance(self.error, DeterministicError):
            return self.error.bound
        return self.error.ci_half_width

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "error": self.error.to_dict(),
            "method": self.method,
            "params": self.params,
        }


@dataclass(frozen=True, eq=False)
class ExitLaw:
    """Truncated law of the exit position Z(tau) from ``start``.

    ``points[i]`` is an exterior lattice point reached with probability
    ``probs[i]``. ``lost_points``/``lost_mass`` describe the in-cone mass the
    truncation gave up on. ``truncation_bound`` bounds the exit mass missing
    from ``probs``: the lost mass weighted by an upper bound on the chance of
    ever leaving the cone from each lost point, or the plain lost total when
    no such bound was supplied.
    """

    start: tuple[int, ...]
    points: np.ndarray
    probs: np.ndarray
    lost_points: np.ndarray
    lost_mass: np.ndarray
    lost_exit_bound: float | None = None

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.probs))

    @property
    def truncation_bound(self) -> float:
        if self.lost_exit_bound is not None:
            return self.lost_exit_bound
        return float(math.fsum(self.lost_mass))

    @property
    def entries(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(c) for c in p): float(q) for p, q in zip(self.points, self.probs)}

    def to_dict(self) -> dict:
        return {
            "start": list(self.start),
            "entries": [{"m": p.tolist(), "p": float(q)} for p, q in zip(self.points, self.probs)],
            "total_mass": self.total_mass,
            "truncation_bound": self.truncation_bound,
        }


@dataclass(frozen=True)
class SurvivalEstimate:
    """Bracket for the probability that the tilted walk never leaves the cone."""

    lower: float
    upper: float
    n_samples: int
    horizon: int
    seed: int
    escape_radius: float = 0.0

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def std_error(self) -> float:
        p = self.midpoint
        return math.sqrt(max(p * (1 - p), 0.0) / self.n_samples)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "n_samples": self.n_samples,
            "horizon": self.horizon,
            "seed": self.seed,
            "escape_radius": self.escape_radius,
        }


@dataclass(frozen=True)
class HarmonicEstimate:
    """Value of h_alpha(k).

    ``error`` is a deterministic half-width (series truncation, or half the MC
    survival bracket); ``sigma`` is the Monte Carlo standard error (0 for the
    series route).
    """

    value: float
    error: float
    sigma: float
    method: str
    k: tuple[int, ...]

    def __float__(self) -> float:
        return self.value

    def combined_sigma(self) -> float:
        return math.hypot(self.error, self.sigma)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "error": self.error,
            "sigma": self.sigma,
            "method": self.method,
            "k": list(self.k),
        }


# --------------------------------------------------------------------------
# forward DP


def _resolve_window(model: WalkModel, window) -> LatticeWindow:
    if isinstance(window, LatticeWindow):
        if window.dimension != model.dimension:
            raise DomainError("window dimension does not match the model")
        return window
    return default_window(model.cone, int(window))


@dataclass(frozen=True, eq=False)
class KilledWalkDP:
    """Result of one forward DP run from ``start``.

    ``visits`` holds the accumulated visit mass over the window (the truncated
    Green function row ``G(start, .)``). ``cone`` is None for the free walk.
    """

    measure: JumpMeasure
    cone: Cone | None
    start: tuple[int, ...]
    window: LatticeWindow
    visits: np.ndarray
    exit_points: np.ndarray
    exit_probs: np.ndarray
    lost_points: np.ndarray
    lost_mass: np.ndarray
    n_steps: int
    tol: float

    @cached_property
    def _log_lost_transform(self) -> tuple[np.ndarray, np.ndarray]:
        """Candidate tilts ``beta`` inside D with ``log sum lost(y) e^{beta.y}``."""
        betas = interior_points(self.measure)
        if self.lost_mass.size == 0:
            return betas, np.full(len(betas), -np.inf)
        ll = logsumexp(betas @ self.lost_points.T.astype(float), b=self.lost_mass, axis=1)
        return betas, ll

    def visit_bound(self, targets) -> np.ndarray:
        """Upper bound on the visits to each target missed by the truncation."""
        t = np.atleast_2d(np.asarray(targets, dtype=float))
        betas, ll = self._log_lost_transform
        if not np.any(np.isfinite(ll)):
            return np.zeros(len(t))
        log_margin = np.log1p(-eval_p_many(self.measure, betas))
        expo = ll[:, None] - betas @ t.T - log_margin[:, None]
        return np.exp(np.min(expo, axis=0))

    def lost_transform_bound(self, rho) -> float:
        """``sum lost(y) rho^y`` for a positive real point ``rho``."""
        if self.lost_mass.size == 0:
            return 0.0
        lr = np.log(np.asarray(rho, dtype=float))
        return float(np.exp(logsumexp(self.lost_points @ lr, b=self.lost_mass)))

    def _in_cone(self, m) -> bool:
        return self.cone is None or bool(self.cone.contains(np.array(m, dtype=float)))

    def value(self, m) -> float:
        m = tuple(int(c) for c in m)
        if not self.window.contains(m):
            raise TruncationError(f"target {m} lies outside the DP window")
        return float(self.visits[self.window.index(m)])

    def estimate(self, m) -> GreenEstimate:
        m = as_lattice_point(m, self.measure.dimension)
        if not self._in_cone(m):
            return GreenEstimate(0.0, DeterministicError(0.0), "dp", self._params(m))
        val = self.value(m)
        # truncation certificate plus a linear float round-off allowance
        bound = float(self.visit_bound([m])[0]) + val * self.n_steps * len(self.measure.steps) * 2.3e-16
        return GreenEstimate(val, DeterministicError(bound), "dp", self._params(m))

    def _params(self, m) -> dict:
        return {
            "k": list(self.start),
            "m": list(m),
            "window": {"lo": list(self.window.lo), "hi": list(self.window.hi)},
            "tol": self.tol,
            "steps": self.n_steps,
        }

    def exit_law(self) -> ExitLaw:
        bound = None
        if self.cone is not None and self.lost_mass.size:
            eb = ever_exit_bound(self.cone, self.measure, self.lost_points)
            bound = math.fsum((self.lost_mass * eb).tolist()) + 1e-16 * self.lost_mass.sum()
        elif self.cone is not None:
            bound = 0.0
        return ExitLaw(self.start, self.exit_points, self.exit_probs, self.lost_points, self.lost_mass, bound)


def run_killed_dp(
    model: WalkModel,
    k,
    window: LatticeWindow | int,
    tol: float = DEFAULT_TOL,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> KilledWalkDP:
    """Push the law of the killed walk from ``k`` until less than ``tol`` is alive.

    Raises
    ------
    TruncationError
        If ``k`` is not in the window.
    DomainError
        If ``k`` is not in the cone.
    ConvergenceError
        If live mass is still above ``tol`` after ``max_steps``.
    """
    window = _resolve_window(model, window)
    k = as_lattice_point(k, model.dimension)
    if not model.cone.contains(np.array(k, dtype=float)):
        raise DomainError(f"start {k} is not in the cone")
    return _forward(model.measure, model.cone, k, window, tol, max_steps)


def _forward(measure: JumpMeasure, cone: Cone | None, k, window: LatticeWindow, tol, max_steps) -> KilledWalkDP:
    if not window.contains(k):
        raise TruncationError(f"start {k} lies outside the window")
    d = measure.dimension
    probs = measure.prob_array
    margin = measure.max_abs_step.astype(int)
    shape = window.shape
    pshape = tuple(n + 2 * g for n, g in zip(shape, margin))
    plo = np.array(window.lo) - margin

    if cone is None:
        in_cone = np.ones(pshape, dtype=bool)
    else:
        axes = [np.arange(a, a + n) for a, n in zip(plo, pshape)]
        ppts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        in_cone = cone.contains(ppts.astype(float))
    central = tuple(slice(g, g + n) for g, n in zip(margin, shape))
    in_window = np.zeros(pshape, dtype=bool)
    in_window[central] = True
    exit_idx = np.flatnonzero(~in_cone)
    lost_idx = np.flatnonzero(in_cone & ~in_window)
    keep = in_cone[central].astype(float)

    shifts = [
        tuple(slice(g + int(si), g + int(si) + n) for g, si, n in zip(margin, s, shape))
        for s in measure.step_array
    ]

    cur = np.zeros(shape)
    cur[window.index(k)] = 1.0
    visits = np.zeros(shape)
    exit_acc = np.zeros(exit_idx.size)
    lost_acc = np.zeros(lost_idx.size)
    out = np.zeros(pshape)
    flat = out.reshape(-1)
    n = 0
    live = 1.0
    while live >= tol:
        if n >= max_steps:
            raise ConvergenceError(
                f"live mass {live:.3e} still above tol after {max_steps} steps; enlarge the window "
                "or check that the walk is transient"
            )
        visits += cur
        out.fill(0.0)
        for sl, p in zip(shifts, probs):
            out[sl] += p * cur
        exit_acc += flat[exit_idx]
        lost_acc += flat[lost_idx]
        cur = out[central] * keep
        live = float(cur.sum())
        n += 1

    live_nz = cur > 0
    lost_pts = np.concatenate([
        np.array(np.unravel_index(lost_idx, pshape)).T.reshape(-1, d) + plo,
        np.argwhere(live_nz).reshape(-1, d) + np.array(window.lo),
    ]).astype(np.int64)
    lost_mass = np.concatenate([lost_acc, cur[live_nz]])
    nz = lost_mass > 0
    epts = (np.array(np.unravel_index(exit_idx, pshape)).T.reshape(-1, d) + plo).astype(np.int64)
    enz = exit_acc > 0
    return KilledWalkDP(
        measure=measure,
        cone=cone,
        start=tuple(k),
        window=window,
        visits=visits,
        exit_points=epts[enz],
        exit_probs=exit_acc[enz],
        lost_points=lost_pts[nz],
        lost_mass=lost_mass[nz],
        n_steps=n,
        tol=tol,
    )


def green_dp(
    model: WalkModel,
    k,
    targets: Iterable,
    window: LatticeWindow | int,
    tol: float = DEFAULT_TOL,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> dict[tuple[int, ...], GreenEstimate]:
    """Certified lower bounds for G_C(k, m) at each target.

    Targets outside the cone get exactly 0.
    """
    window = _resolve_window(model, window)
    targets = [as_lattice_point(t, model.dimension) for t in targets]
    for t in targets:
        if model.cone.contains(np.array(t, dtype=float)) and not window.contains(t):
            raise TruncationError(f"target {t} lies outside the window")
    run = run_killed_dp(model, k, window, tol, max_steps)
    return {t: run.estimate(t) for t in targets}


def exit_law_dp(
    model: WalkModel,
    k,
    window: LatticeWindow | int,
    tol: float = DEFAULT_TOL,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> ExitLaw:
    return run_killed_dp(model, k, window, tol, max_steps).exit_law()


def free_green_dp(measure: JumpMeasure, k, radius: int, tol: float = DEFAULT_TOL,
                  max_steps: int = DEFAULT_MAX_STEPS) -> KilledWalkDP:
    """Same forward iteration for the walk without killing, on a box around ``k``."""
    k = as_lattice_point(k, measure.dimension)
    win = LatticeWindow(tuple(c - radius for c in k), tuple(c + radius for c in k))
    return _forward(measure, None, k, win, tol, max_steps)


# --------------------------------------------------------------------------
# Monte Carlo


def _batches(n_total: int, batch: int) -> list[tuple[int, int]]:
    return [(i, min(batch, n_total - i * batch)) for i in range((n_total + batch - 1) // batch)]


def _batch_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _run_batches(fn, n_total: int, threads: int, batch: int = MC_BATCH):
    jobs = _batches(n_total, batch)
    if threads <= 1 or len(jobs) == 1:
        return [fn(i, size) for i, size in jobs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda job: fn(*job), jobs))


def _draw_steps(rng, cum: np.ndarray, size: int) -> np.ndarray:
    return np.minimum(np.searchsorted(cum, rng.random(size), side="right"), len(cum) - 1)


def green_mc(
    model: WalkModel,
    k,
    m,
    n_traj: int,
    horizon: int,
    seed: int,
    confidence: float = 0.95,
    threads: int = 1,
) -> GreenEstimate:
    """Mean number of visits to ``m`` before exit, over simulated paths.

    Paths are cut at ``horizon`` steps. Results depend only on ``seed`` and
    ``n_traj``; batches use independent substreams keyed by batch index.
    """
    d = model.dimension
    k = as_lattice_point(k, d)
    m = as_lattice_point(m, d)
    params = {"k": list(k), "m": list(m), "n_traj": n_traj, "horizon": horizon, "seed": seed,
              "horizon_truncated": True}
    if not model.cone.contains(np.array(m, dtype=float)) or not model.cone.contains(np.array(k, dtype=float)):
        return GreenEstimate(0.0, MonteCarloError(0.0, confidence, n_traj), "mc", params)
    steps = model.measure.step_array
    cum = np.cumsum(model.measure.prob_array)
    target = np.array(m)
    cone = model.cone

    def batch(index: int, size: int):
        rng = _batch_rng(seed, index)
        pos = np.tile(np.array(k), (size, 1))
        counts = np.zeros(size)
        counts += np.all(pos == target, axis=1)
        ids = np.arange(size)
        for _ in range(horizon):
            pos += steps[_draw_steps(rng, cum, len(ids))]
            alive = cone.contains(pos.astype(float))
            pos, ids = pos[alive], ids[alive]
            if ids.size == 0:
                break
            hit = np.all(pos == target, axis=1)
            np.add.at(counts, ids[hit], 1.0)
        return counts.sum(), (counts ** 2).sum()

    sums = _run_batches(batch, n_traj, threads)
    s1 = math.fsum(a for a, _ in sums)
    s2 = math.fsum(b for _, b in sums)
    mean = s1 / n_traj
    var = max(s2 / n_traj - mean * mean, 0.0) * n_traj / max(n_traj - 1, 1)
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    half = z * math.sqrt(var / n_traj)
    return GreenEstimate(mean, MonteCarloError(half, confidence, n_traj), "mc", params)


def survival_mc(
    model: WalkModel,
    boundary: BoundaryData,
    k,
    horizon: int,
    escape_radius: float,
    seed: int,
    n_samples: int = 100_000,
    threads: int = 1,
) -> SurvivalEstimate:
    """Bracket P_k(tilted walk never exits C) by simulation.

    ``upper`` is the fraction alive at ``horizon``; ``lower`` the fraction
    alive at ``horizon`` whose distance to the complement of C exceeds
    ``escape_radius``.
    """
    d = model.dimension
    k = as_lattice_point(k, d)
    if not model.cone.contains(np.array(k, dtype=float)):
        raise DomainError(f"start {k} is not in the cone")
    tw = twisted_measure(model.measure, boundary.alpha)
    steps = tw.step_array
    cum = np.cumsum(tw.prob_array)
    cone = model.cone

    def batch(index: int, size: int):
        rng = _batch_rng(seed, index)
        pos = np.tile(np.array(k), (size, 1))
        for _ in range(horizon):
            pos += steps[_draw_steps(rng, cum, len(pos))]
            pos = pos[cone.contains(pos.astype(float))]
            if len(pos) == 0:
                break
        deep = cone.depth(pos.astype(float)) > escape_radius if len(pos) else np.zeros(0, bool)
        return len(pos), int(np.count_nonzero(deep))

    res = _run_batches(batch, n_samples, threads)
    alive = sum(a for a, _ in res)
    deep = sum(b for _, b in res)
    return SurvivalEstimate(deep / n_samples, alive / n_samples, n_samples, horizon, seed, escape_radius)


# --------------------------------------------------------------------------
# harmonic functions


def _check_direction(model: WalkModel, boundary: BoundaryData) -> None:
    u = boundary.u
    if model.cone.contains(u):
        return
    if model.cone.closure_contains(u, atol=1e-12):
        log.warning("direction %s lies on the boundary of the cone; h vanishes identically there",
                    u.tolist())
        return
    raise DomainError(f"direction {u.tolist()} is not in the cone")


def face_decay_rates(measure: JumpMeasure, normals: np.ndarray) -> np.ndarray:
    """Largest ``theta >= 0`` with ``E exp(-theta n.S) <= 1`` per normal row.

    ``exp(-theta n.Z)`` is then a supermartingale, so from ``y`` the walk ever
    reaches ``{n.x <= 0}`` with probability at most ``exp(-theta n.y)``.
    ``inf`` means the walk can never decrease ``n.x``; ``0`` gives no bound.
    """
    s = measure.step_array.astype(float)
    p = measure.prob_array
    out = np.zeros(len(normals))
    for i, n in enumerate(np.atleast_2d(normals)):
        proj = s @ n
        if np.all(proj >= 0):
            out[i] = np.inf if np.any(proj > 0) else 0.0
            continue
        if p @ proj <= 0:
            continue

        def g(th):
            return float(p @ np.exp(-th * proj)) - 1.0

        hi = 1.0
        while g(hi) <= 0:
            hi *= 2.0
        lo = hi / 2.0
        while g(lo) > 0 and lo > 1e-300:
            lo /= 2.0
        # g(lo) <= 0 < g(hi); shrink toward the root from below
        root = brentq(g, lo, hi, xtol=1e-15, rtol=1e-14)
        out[i] = root * (1 - 1e-12)
    return out


def ever_exit_bound(cone: Cone, measure: JumpMeasure, points: np.ndarray) -> np.ndarray:
    """Upper bound on P_y(walk with law ``measure`` ever leaves C) per row ``y``.

    Leaving C forces leaving every branch containing ``y``, and leaving a
    branch forces crossing one of its faces.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        return np.zeros(0)
    tw = measure
    best = np.ones(len(pts))
    for normals in cone.normal_arrays:
        theta = face_decay_rates(tw, normals)
        proj = pts @ normals.T
        inside = np.all(proj > 0, axis=1)
        with np.errstate(invalid="ignore", over="ignore"):
            terms = np.where(np.isinf(theta), 0.0, np.exp(-np.where(np.isinf(theta), 0.0, theta) * proj))
        b = np.minimum(terms.sum(axis=1), 1.0)
        best = np.where(inside, np.minimum(best, b), best)
    return best


def exit_probability_bound(cone: Cone, measure: JumpMeasure, boundary: BoundaryData,
                           points: np.ndarray) -> np.ndarray:
    """:func:`ever_exit_bound` for the walk twisted at ``boundary.alpha``."""
    return ever_exit_bound(cone, twisted_measure(measure, boundary.alpha), points)


def harmonic_from_dp(run: KilledWalkDP, boundary: BoundaryData) -> HarmonicEstimate:
    """Series value ``e^{alpha.k} - sum exit(m) e^{alpha.m}`` with its error bound.

    The truncated series is an upper bound; the true value lies in
    ``[value - error, value]``.
    """
    alpha = boundary.alpha
    k = np.array(run.start, dtype=float)
    head = math.exp(float(alpha @ k))
    f = math.fsum((run.exit_probs * np.exp(run.exit_points @ alpha)).tolist())
    value = head - f
    if run.lost_mass.size:
        eb = exit_probability_bound(run.cone, run.measure, boundary, run.lost_points)
        err = math.fsum((run.lost_mass * np.exp(run.lost_points @ alpha) * eb).tolist())
    else:
        err = 0.0
    # float round-off in the exponentials and in the accumulated exit mass
    err += (head + f) * (4 + run.n_steps * len(run.measure.steps)) * 2.3e-16
    return HarmonicEstimate(value, err, 0.0, "series", run.start)


def harmonic_h(
    model: WalkModel,
    boundary: BoundaryData,
    k,
    method: Literal["series", "mc"] = "series",
    window: LatticeWindow | int = 60,
    tol: float = DEFAULT_TOL,
    *,
    n_samples: int = 100_000,
    horizon: int = 400,
    escape_radius: float = 20.0,
    seed: int | None = None,
    threads: int = 1,
) -> HarmonicEstimate:
    """h_alpha(k) for alpha = alpha(u) by the exit-law series or by simulation.

    Raises
    ------
    DomainError
        If ``boundary.u`` lies outside the closed cone, or ``k`` outside C.
    TruncationError
        If the series value is negative beyond its error bound.
    """
    _check_direction(model, boundary)
    k = as_lattice_point(k, model.dimension)
    if not model.cone.contains(np.array(k, dtype=float)):
        raise DomainError(f"k = {k} is not in the cone")
    if method == "series":
        est = harmonic_from_dp(run_killed_dp(model, k, window, tol), boundary)
        if est.value < -est.error:
            raise TruncationError(f"negative h ({est.value:.3e}) beyond its error bound; enlarge the window")
        return est
    if method == "mc":
        if seed is None:
            raise DomainError("the Monte Carlo estimator needs a seed")
        s = survival_mc(model, boundary, k, horizon, escape_radius, seed, n_samples, threads)
        scale = math.exp(float(boundary.alpha @ np.array(k, dtype=float)))
        return HarmonicEstimate(scale * s.midpoint, scale * 0.5 * (s.upper - s.lower),
                                scale * s.std_error, "mc", k)
    raise DomainError(f"unknown method {method!r}")


def harmonicity_residual(
    model: WalkModel,
    boundary: BoundaryData,
    k,
    window: LatticeWindow | int,
    tol: float = DEFAULT_TOL,
) -> float:
    """``|sum_{s: k+s in C} mu(s) h(k+s) - h(k)|`` with h from the series."""
    _check_direction(model, boundary)
    window = _resolve_window(model, window)
    k = as_lattice_point(k, model.dimension)
    hk = harmonic_from_dp(run_killed_dp(model, k, window, tol), boundary).value
    acc = []
    for s, p in zip(model.measure.steps, model.measure.probs):
        nxt = tuple(a + b for a, b in zip(k, s))
        if not model.cone.contains(np.array(nxt, dtype=float)):
            continue
        if not window.contains(nxt):
            raise TruncationError(f"successor {nxt} lies outside the window")
        acc.append(p * harmonic_from_dp(run_killed_dp(model, nxt, window, tol), boundary).value)
    return abs(math.fsum(acc) - hk)

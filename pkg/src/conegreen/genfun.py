"""Geometry of the set D = {alpha : P(alpha) <= 1}.

P is the Laplace transform of the jump law. Its sublevel set D is compact
and strictly convex, and the normalised gradient maps the boundary of D
homeomorphically onto the unit sphere. :func:`solve_alpha` inverts that
map and packages the second-order data of the exponentially tilted walk.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, DomainError
from .model import JumpMeasure

log = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-10
MAX_NEWTON = 100


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Boundary point of D whose outward normal is ``u``, with tilted moments.

    Attributes
    ----------
    u : ndarray (d,)
        Unit direction.
    alpha : ndarray (d,)
        Boundary point with ``P(alpha) = 1`` and ``grad P(alpha) = lam * u``.
    r : ndarray (d,)
        ``exp(alpha)``.
    lam : float
        ``|grad P(alpha)|``.
    drift : ndarray (d,)
        Mean step of the tilted walk, equal to ``grad P(alpha)``.
    q_full : ndarray (d, d)
        Second moments of the tilted walk (not centred).
    rotation : ndarray (d, d)
        Rotation sending ``u`` to ``e1``.
    q_reduced : ndarray (d-1, d-1)
        Lower-right block of ``rotation @ q_full @ rotation.T``.
    det_q_reduced : float
        Its determinant; 1 when d = 1.
    """

    u: np.ndarray
    alpha: np.ndarray
    r: np.ndarray
    lam: float
    drift: np.ndarray
    q_full: np.ndarray
    rotation: np.ndarray
    q_reduced: np.ndarray
    det_q_reduced: float

    @property
    def dimension(self) -> int:
        return self.u.shape[0]

    def to_dict(self) -> dict:
        return {
            "u": self.u.tolist(),
            "alpha": self.alpha.tolist(),
            "r": self.r.tolist(),
            "lambda": self.lam,
            "drift": self.drift.tolist(),
            "q_full": self.q_full.tolist(),
            "rotation": self.rotation.tolist(),
            "q_reduced": self.q_reduced.tolist(),
            "det_q": self.det_q_reduced,
            "drift_norm": float(np.linalg.norm(self.drift)),
        }


# --------------------------------------------------------------------------
# P and its derivatives


def _weights(measure: JumpMeasure, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    return measure.prob_array * np.exp(measure.step_array @ alpha)


def eval_p(measure: JumpMeasure, alpha) -> float:
    """``P(alpha) = sum_k exp(alpha . k) mu(k)``."""
    return float(np.sum(_weights(measure, alpha)))


def eval_p_many(measure: JumpMeasure, alphas: np.ndarray) -> np.ndarray:
    """P over the last axis of ``alphas``."""
    alphas = np.asarray(alphas, dtype=float)
    return np.exp(alphas @ measure.step_array.T.astype(float)) @ measure.prob_array


def grad_p(measure: JumpMeasure, alpha) -> np.ndarray:
    return _weights(measure, alpha) @ measure.step_array


def hess_p(measure: JumpMeasure, alpha) -> np.ndarray:
    w = _weights(measure, alpha)
    s = measure.step_array.astype(float)
    return (s * w[:, None]).T @ s


def second_moments(measure: JumpMeasure, alpha) -> np.ndarray:
    """Second moments of the tilted law ``exp(alpha . k) mu(k)``."""
    return hess_p(measure, alpha)


# --------------------------------------------------------------------------
# interior minimiser and ray shooting


def find_interior_min(measure: JumpMeasure, tol: float = 1e-12, max_iter: int = MAX_NEWTON) -> np.ndarray:
    """Minimiser of P by damped Newton from the origin.

    Raises
    ------
    ConvergenceError
        If the gradient does not drop below ``tol``.
    """
    return _interior_min_cached(measure, float(tol), int(max_iter)).copy()


@lru_cache(maxsize=64)
def _interior_min_cached(measure: JumpMeasure, tol: float, max_iter: int) -> np.ndarray:
    a = np.zeros(measure.dimension)
    f = eval_p(measure, a)
    for _ in range(max_iter):
        g = grad_p(measure, a)
        if np.linalg.norm(g) <= tol:
            if f >= 1.0:
                raise ConvergenceError("minimum of P is not below 1; is the mean zero?")
            return a
        step = -np.linalg.solve(hess_p(measure, a), g)
        t = 1.0
        while True:
            cand = a + t * step
            fc = eval_p(measure, cand)
            if fc <= f - 1e-4 * t * abs(g @ step) or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12:
            # Newton direction no longer improves P at float resolution.
            if np.linalg.norm(g) <= 1e3 * tol:
                return a
            break
        a, f = cand, fc
    raise ConvergenceError(f"interior minimiser did not converge (|grad P| = {np.linalg.norm(g):.3e})")


def ray_boundary(measure: JumpMeasure, directions: np.ndarray, origin=None) -> np.ndarray:
    """Distances ``t > 0`` with ``P(origin + t v) = 1`` for each row ``v``.

    ``origin`` must lie strictly inside D (default: the interior minimiser),
    which makes the root unique along every ray.
    """
    v = np.atleast_2d(np.asarray(directions, dtype=float))
    a0 = find_interior_min(measure) if origin is None else np.asarray(origin, dtype=float)
    if eval_p(measure, a0) >= 1.0:
        raise DomainError("ray origin is not inside D")
    lo = np.zeros(len(v))
    hi = np.ones(len(v))
    for _ in range(200):
        over = eval_p_many(measure, a0 + hi[:, None] * v) > 1.0
        if over.all():
            break
        hi = np.where(over, hi, 2.0 * hi)
    else:
        raise ConvergenceError("could not bracket the boundary of D along some ray")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        inside = eval_p_many(measure, a0 + mid[:, None] * v) <= 1.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, hi)):
            break
    return 0.5 * (lo + hi)


def scan_directions(d: int, n: int | None = None) -> np.ndarray:
    """Deterministic near-uniform unit vectors used by the angular scan."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        n = n or 96
        th = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    n = n or 200 * d
    g = np.random.default_rng(2718).standard_normal((n, d))
    g = np.concatenate([g, np.eye(d), -np.eye(d)])
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@lru_cache(maxsize=64)
def _scan(measure: JumpMeasure):
    a0 = find_interior_min(measure)
    dirs = scan_directions(measure.dimension)
    t = ray_boundary(measure, dirs, a0)
    pts = a0 + t[:, None] * dirs
    grads = np.exp(pts @ measure.step_array.T) * measure.prob_array @ measure.step_array
    normals = grads / np.linalg.norm(grads, axis=1, keepdims=True)
    return pts, normals, grads


@lru_cache(maxsize=64)
def interior_points(measure: JumpMeasure, fractions: tuple[float, ...] = (0.25, 0.5, 0.75, 0.9, 0.97, 0.995)) -> np.ndarray:
    """Points strictly inside D spread along rays from the minimiser.

    Used as candidate tilts for truncation certificates. The minimiser itself
    is row 0.
    """
    a0 = find_interior_min(measure)
    dirs = scan_directions(measure.dimension, 32 if measure.dimension == 2 else None)
    t = ray_boundary(measure, dirs, a0)
    rows = [a0]
    for f in fractions:
        rows.append(a0 + f * t[:, None] * dirs)
    pts = np.vstack([np.atleast_2d(r) for r in rows])
    pts.setflags(write=False)
    return pts


# --------------------------------------------------------------------------
# the boundary map


def rotation_to_e1(u) -> np.ndarray:
    """Rotation in the plane of ``u`` and ``e1`` that sends ``u`` to ``e1``.

    For ``u = -e1`` the plane is taken to be (e1, e2). In d = 1 the result is
    ``[[1]]`` or ``[[-1]]``.
    """
    u = np.asarray(u, dtype=float)
    d = u.shape[0]
    if d == 1:
        return np.array([[1.0 if u[0] >= 0 else -1.0]])
    c = u[0]
    w = u.copy()
    w[0] = 0.0
    s = np.linalg.norm(w)
    if s == 0.0:
        if c > 0:
            return np.eye(d)
        w = np.zeros(d)
        w[1] = 1.0
    else:
        w /= s
    e1 = np.zeros(d)
    e1[0] = 1.0
    R = np.eye(d) + (c - 1.0) * (np.outer(e1, e1) + np.outer(w, w)) + s * (np.outer(e1, w) - np.outer(w, e1))
    return R


def reduced_matrix(q_full: np.ndarray, rotation: np.ndarray) -> tuple[np.ndarray, float]:
    """Drop the first row and column of ``R Q R^T``; det of the empty block is 1."""
    q_full = np.asarray(q_full, dtype=float)
    rotation = np.asarray(rotation, dtype=float)
    rq = rotation @ q_full @ rotation.T
    block = rq[1:, 1:]
    block = 0.5 * (block + block.T)
    det = 1.0 if block.size == 0 else float(np.linalg.det(block))
    return block, det


def solve_alpha(measure: JumpMeasure, u, tol: float = BOUNDARY_TOL, max_iter: int = MAX_NEWTON) -> BoundaryData:
    """Boundary point of D with outward normal ``u``.

    Solves ``grad P(alpha) = lam u``, ``P(alpha) = 1``, ``lam > 0`` by an
    angular scan of ray-shot boundary points followed by damped Newton on
    the (d+1)-dimensional system.

    Raises
    ------
    ConvergenceError
        If Newton fails from every restart.
    """
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != measure.dimension:
        raise DomainError(f"direction has dimension {u.shape[0]}, measure has {measure.dimension}")
    nu = np.linalg.norm(u)
    if not np.isfinite(nu) or abs(nu - 1.0) > 1e-9:
        raise DomainError("u must be a unit vector")
    u = u / nu
    pts, normals, grads = _scan(measure)
    order = np.argsort(-(normals @ u))
    alpha = None
    for idx in order[:4]:
        alpha = _newton_boundary(measure, u, pts[idx], float(np.linalg.norm(grads[idx])), tol, max_iter)
        if alpha is not None:
            break
    if alpha is None:
        # finer local scan around the best coarse direction
        a0 = find_interior_min(measure)
        base_dir = (pts[order[0]] - a0) / np.linalg.norm(pts[order[0]] - a0)
        jitter = np.random.default_rng(0).standard_normal((64, measure.dimension)) * 0.05
        dirs = base_dir + jitter
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        t = ray_boundary(measure, dirs, a0)
        cand = a0 + t[:, None] * dirs
        g = np.array([grad_p(measure, c) for c in cand])
        score = (g / np.linalg.norm(g, axis=1, keepdims=True)) @ u
        for idx in np.argsort(-score)[:8]:
            alpha = _newton_boundary(measure, u, cand[idx], float(np.linalg.norm(g[idx])), tol, max_iter)
            if alpha is not None:
                break
    if alpha is None:
        raise ConvergenceError(f"boundary solve failed for u = {u.tolist()}")
    return boundary_data(measure, u, alpha)


def _newton_boundary(measure, u, alpha0, lam0, tol, max_iter):
    d = measure.dimension
    x = np.concatenate([alpha0, [lam0]])

    def resid(x):
        a, lam = x[:d], x[d]
        return np.concatenate([grad_p(measure, a) - lam * u, [eval_p(measure, a) - 1.0]])

    F = resid(x)
    fn = np.linalg.norm(F)
    for _ in range(max_iter):
        if fn <= 1e-15:
            break
        a = x[:d]
        J = np.zeros((d + 1, d + 1))
        J[:d, :d] = hess_p(measure, a)
        J[:d, d] = -u
        J[d, :d] = grad_p(measure, a)
        try:
            step = -np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        while t >= 1e-10:
            cand = x + t * step
            Fc = resid(cand)
            fc = np.linalg.norm(Fc)
            if np.isfinite(fc) and fc < (1.0 - 1e-4 * t) * fn:
                break
            t *= 0.5
        else:
            break
        x, F, fn = cand, Fc, fc
    a, lam = x[:d], x[d]
    if lam <= 0 or not np.all(np.isfinite(x)):
        return None
    g = grad_p(measure, a)
    if abs(eval_p(measure, a) - 1.0) > tol or np.linalg.norm(g / np.linalg.norm(g) - u) > max(tol, 1e-12) * 100:
        return None
    return a


def boundary_data(measure: JumpMeasure, u, alpha) -> BoundaryData:
    """Assemble :class:`BoundaryData` from an already solved boundary point."""
    u = np.asarray(u, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    drift = grad_p(measure, alpha)
    q_full = second_moments(measure, alpha)
    rot = rotation_to_e1(u)
    q_red, det = reduced_matrix(q_full, rot)
    return BoundaryData(
        u=u,
        alpha=alpha,
        r=np.exp(alpha),
        lam=float(np.linalg.norm(drift)),
        drift=drift,
        q_full=q_full,
        rotation=rot,
        q_reduced=q_red,
        det_q_reduced=det,
    )


def twisted_measure(measure: JumpMeasure, alpha, tol: float = BOUNDARY_TOL) -> JumpMeasure:
    """Exponentially tilted law ``exp(alpha . k) mu(k)`` on the same steps.

    Raises
    ------
    DomainError
        If ``P(alpha)`` differs from 1 by more than ``tol``.
    """
    p = eval_p(measure, alpha)
    if abs(p - 1.0) > tol:
        raise DomainError(f"P(alpha) = {p!r} is not 1 within {tol}")
    w = _weights(measure, alpha) / p
    return JumpMeasure(measure.steps, tuple(float(x) for x in w))

"""Walk models: a finitely supported jump law on Z^d and an open cone.

The cone is a finite union of open polyhedral cones ("branches"); a point
lies in a branch when it has a strictly positive inner product with every
normal of that branch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ModelError

MASS_TOL = 1e-12


@dataclass(frozen=True)
class JumpMeasure:
    """Probability measure on Z^d with finite support.

    Parameters
    ----------
    steps : sequence of integer d-vectors
        Support points, pairwise distinct.
    probs : sequence of float
        Probabilities in (0, 1], summing to one within ``MASS_TOL``.
    """

    steps: tuple[tuple[int, ...], ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        steps = tuple(tuple(int(c) for c in s) for s in self.steps)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "probs", probs)
        if not steps:
            raise ModelError("empty support")
        if len(steps) != len(probs):
            raise ModelError("steps and probs have different lengths")
        d = len(steps[0])
        if d < 1 or any(len(s) != d for s in steps):
            raise ModelError("steps must all have the same positive dimension")
        if len(set(steps)) != len(steps):
            raise ModelError("steps are not pairwise distinct")
        if any(not (0.0 < p <= 1.0) for p in probs):
            raise ModelError("probabilities must lie in (0, 1]")
        total = math.fsum(probs)
        if abs(total - 1.0) > MASS_TOL:
            raise ModelError(f"mass ≠ 1 (total {total!r})")

    @property
    def dimension(self) -> int:
        return len(self.steps[0])

    @cached_property
    def step_array(self) -> np.ndarray:
        a = np.array(self.steps, dtype=np.int64)
        a.setflags(write=False)
        return a

    @cached_property
    def prob_array(self) -> np.ndarray:
        a = np.array(self.probs, dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def mean(self) -> np.ndarray:
        return self.prob_array @ self.step_array

    @property
    def max_step_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.step_array, axis=1)))

    @property
    def max_abs_step(self) -> np.ndarray:
        """Per-axis maximum of |step_i|."""
        return np.max(np.abs(self.step_array), axis=0)

    @classmethod
    def from_dict(cls, mapping: dict) -> "JumpMeasure":
        """Build from ``{step_tuple: prob}``."""
        items = sorted(mapping.items())
        return cls(tuple(k if isinstance(k, tuple) else (k,) for k, _ in items),
                   tuple(v for _, v in items))


@dataclass(frozen=True)
class Cone:
    """Finite union of open polyhedral cones.

    ``branches[b]`` is a tuple of normals; ``x`` lies in branch ``b`` iff
    ``n . x > 0`` for every normal ``n`` of that branch.
    """

    branches: tuple[tuple[tuple[float, ...], ...], ...]

    def __post_init__(self):
        branches = tuple(
            tuple(tuple(float(c) for c in n) for n in branch) for branch in self.branches
        )
        object.__setattr__(self, "branches", branches)
        if not branches or any(len(b) == 0 for b in branches):
            raise ModelError("a cone needs at least one branch, each with at least one normal")
        d = len(branches[0][0])
        for b in branches:
            for n in b:
                if len(n) != d:
                    raise ModelError("cone normals have inconsistent dimensions")
                if not any(n):
                    raise ModelError("cone normals must be nonzero")

    @property
    def dimension(self) -> int:
        return len(self.branches[0][0])

    @cached_property
    def normal_arrays(self) -> tuple[np.ndarray, ...]:
        out = []
        for b in self.branches:
            a = np.array(b, dtype=float)
            a.setflags(write=False)
            out.append(a)
        return tuple(out)

    def contains(self, x) -> np.ndarray | bool:
        """Vectorised membership over the last axis of ``x``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise ModelError(
                f"dimension mismatch: cone has d={self.dimension}, point has {x.shape[-1]}"
            )
        inside = np.zeros(x.shape[:-1], dtype=bool)
        for normals in self.normal_arrays:
            inside |= np.all(x @ normals.T > 0.0, axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def closure_contains(self, x, atol: float = 1e-12) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape[:-1], dtype=bool)
        for normals in self.normal_arrays:
            inside |= np.all(x @ normals.T >= -atol, axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def depth(self, x) -> np.ndarray:
        """Lower bound on the Euclidean distance from ``x`` to the complement.

        Exact for a single convex branch; for unions the best branch is used.
        Points outside the cone get depth 0.
        """
        x = np.asarray(x, dtype=float)
        best = np.zeros(x.shape[:-1])
        for normals in self.normal_arrays:
            unit = normals / np.linalg.norm(normals, axis=1, keepdims=True)
            best = np.maximum(best, np.min(x @ unit.T, axis=-1))
        return best

    def branch_normals_containing(self, y) -> list[np.ndarray]:
        """Normal arrays of every branch that contains the point ``y``."""
        y = np.asarray(y, dtype=float)
        return [n for n in self.normal_arrays if np.all(n @ y > 0.0)]


def cone_contains(cone: Cone, x) -> bool:
    """Membership of a single point; the boundary is excluded."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ModelError("cone_contains expects a single d-vector")
    return bool(cone.contains(x))


@dataclass(frozen=True)
class LatticeWindow:
    """Axis-aligned integer box ``lo <= x <= hi`` (inclusive)."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(int(c) for c in self.lo)
        hi = tuple(int(c) for c in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise ModelError("window corners must have the same positive dimension")
        if any(a > b for a, b in zip(lo, hi)):
            raise ModelError("window needs lo <= hi componentwise")

    @property
    def dimension(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    def contains(self, x) -> np.ndarray | bool:
        x = np.asarray(x)
        res = np.all((x >= np.array(self.lo)) & (x <= np.array(self.hi)), axis=-1)
        return bool(res) if np.ndim(res) == 0 else res

    def index(self, x) -> tuple[int, ...]:
        return tuple(int(c) - a for c, a in zip(x, self.lo))

    def points(self) -> np.ndarray:
        """All lattice points, shape ``shape + (d,)``."""
        axes = [np.arange(a, b + 1) for a, b in zip(self.lo, self.hi)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def inner_half(self) -> "LatticeWindow":
        """Concentric box with half the side lengths."""
        lo, hi = [], []
        for a, b in zip(self.lo, self.hi):
            c, h = (a + b) / 2.0, (b - a) / 4.0
            lo.append(math.ceil(c - h))
            hi.append(math.floor(c + h))
        return LatticeWindow(tuple(lo), tuple(hi))

    def grow(self, pad: int) -> "LatticeWindow":
        return LatticeWindow(tuple(a - pad for a in self.lo), tuple(b + pad for b in self.hi))


def default_window(cone: Cone, size: int) -> LatticeWindow:
    """Box of half-width ``size`` trimmed to the orthants the cone meets.

    An axis whose sampled cone directions are all (weakly) one-signed is cut
    at ``-1`` / ``+1`` on the other side; cut-off cone points only ever
    count as truncation loss, which the DP certificates absorb.
    """
    d = cone.dimension
    dirs = _sphere_sample(d)
    inside = dirs[cone.contains(dirs)]
    lo, hi = [], []
    for i in range(d):
        if inside.size == 0:
            lo.append(-size)
            hi.append(size)
            continue
        lo.append(-size if np.any(inside[:, i] < -1e-9) else -1)
        hi.append(size if np.any(inside[:, i] > 1e-9) else 1)
    return LatticeWindow(tuple(lo), tuple(hi))


def _sphere_sample(d: int, n: int = 4000) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    rng = np.random.default_rng(12345)
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True)
class WalkModel:
    measure: JumpMeasure
    cone: Cone
    name: str = "model"

    def __post_init__(self):
        if self.measure.dimension != self.cone.dimension:
            raise ModelError(
                f"measure dimension {self.measure.dimension} != cone dimension {self.cone.dimension}"
            )

    @property
    def dimension(self) -> int:
        return self.measure.dimension


# --------------------------------------------------------------------------
# hypothesis checks


@dataclass(frozen=True)
class A1Report:
    mean: tuple[float, ...]
    mean_nonzero: bool
    reachable: bool
    box_radius: int
    search_radius: int
    note: str = (
        "irreducibility is a finite proxy: BFS from 0 inside the search box must "
        "cover the target box"
    )

    @property
    def ok(self) -> bool:
        return self.mean_nonzero and self.reachable

    def to_dict(self) -> dict:
        return {
            "mean": list(self.mean),
            "mean_nonzero": self.mean_nonzero,
            "reachable": self.reachable,
            "box_radius": self.box_radius,
            "search_radius": self.search_radius,
            "ok": self.ok,
            "note": self.note,
        }


def check_a1(measure: JumpMeasure, box_radius: int | None = None, search_factor: int = 4) -> A1Report:
    """Nonzero mean and a reachability proxy for irreducibility on Z^d."""
    need = math.ceil(measure.max_step_norm - 1e-12)
    if box_radius is None:
        box_radius = max(need, 1)
    if box_radius < need:
        raise ModelError(f"box_radius {box_radius} is below the max step norm {need}")
    search = search_factor * box_radius
    win = LatticeWindow((-search,) * measure.dimension, (search,) * measure.dimension)
    origin = (0,) * measure.dimension
    reach = _bfs(win, np.ones(win.shape, dtype=bool), origin, measure.step_array)
    c = search
    sl = tuple(slice(c - box_radius, c + box_radius + 1) for _ in range(measure.dimension))
    mean = measure.mean
    return A1Report(
        mean=tuple(float(v) for v in mean),
        mean_nonzero=bool(np.any(np.abs(mean) > 1e-14)),
        reachable=bool(np.all(reach[sl])),
        box_radius=int(box_radius),
        search_radius=int(search),
    )


def _bfs(window: LatticeWindow, allowed: np.ndarray, start, steps: np.ndarray) -> np.ndarray:
    """Set of window points reachable from ``start`` through ``allowed`` cells."""
    shape = window.shape
    seen = np.zeros(shape, dtype=bool)
    seen[window.index(start)] = True
    frontier = seen.copy()
    while frontier.any():
        new = np.zeros(shape, dtype=bool)
        for s in steps:
            src, dst = _shift_slices(shape, s)
            new[dst] |= frontier[src]
        new &= allowed & ~seen
        seen |= new
        frontier = new
    return seen


def _shift_slices(shape, s):
    """Slices so that ``dst`` cells are ``src`` cells moved by ``s``."""
    src, dst = [], []
    for n, si in zip(shape, s):
        si = int(si)
        if si >= 0:
            src.append(slice(0, max(n - si, 0)))
            dst.append(slice(si, n) if si < n else slice(0, 0))
        else:
            src.append(slice(-si, n) if -si < n else slice(0, 0))
            dst.append(slice(0, max(n + si, 0)))
    return tuple(src), tuple(dst)


def check_a2(model: WalkModel, window: LatticeWindow, base, targets: Iterable | None = None) -> bool:
    """Two-way reachability between ``base`` and every target inside C ∩ window.

    Targets default to the cone points of the inner half of ``window``.
    """
    base = tuple(int(c) for c in base)
    if not window.contains(base) or not model.cone.contains(np.array(base, dtype=float)):
        raise ModelError(f"base {base} is not in E ∩ window")
    pts = window.points()
    allowed = model.cone.contains(pts.astype(float))
    steps = model.measure.step_array
    fwd = _bfs(window, allowed, base, steps)
    bwd = _bfs(window, allowed, base, -steps)
    if targets is None:
        inner = window.inner_half()
        tmask = inner.contains(pts) & allowed
    else:
        tmask = np.zeros(window.shape, dtype=bool)
        for t in targets:
            t = tuple(int(c) for c in t)
            if window.contains(t) and model.cone.contains(np.array(t, dtype=float)):
                tmask[window.index(t)] = True
    return bool(np.all(fwd[tmask] & bwd[tmask]))


def smallest_cone_point(cone: Cone, radius: int = 8) -> tuple[int, ...]:
    """Lattice point of the cone with minimal norm; ties go lexicographic."""
    d = cone.dimension
    best = None
    for p in product(range(-radius, radius + 1), repeat=d):
        if cone.contains(np.array(p, dtype=float)):
            key = (sum(c * c for c in p), p)
            if best is None or key < best:
                best = key
    if best is None:
        raise ModelError(f"no lattice point of the cone within radius {radius}")
    return best[1]


# --------------------------------------------------------------------------
# JSON model files


def model_to_dict(model: WalkModel) -> dict:
    return {
        "name": model.name,
        "dimension": model.dimension,
        "steps": [{"v": list(s), "p": p} for s, p in zip(model.measure.steps, model.measure.probs)],
        "cone": {"branches": [[list(n) for n in b] for b in model.cone.branches]},
    }


def model_from_dict(data: dict, *, check_hypotheses: bool = True) -> WalkModel:
    """Validate a parsed model record; see :func:`load_model`."""
    try:
        name = data.get("name", "model")
        d = data["dimension"]
        raw_steps = data["steps"]
        branches = data["cone"]["branches"]
    except (KeyError, TypeError, AttributeError) as exc:
        raise ModelError(f"model record is missing a required field: {exc}") from exc
    if not isinstance(name, str):
        raise ModelError("name must be a string")
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise ModelError("dimension must be a positive integer")
    steps, probs = [], []
    for entry in raw_steps:
        try:
            v, p = entry["v"], entry["p"]
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed step entry {entry!r}") from exc
        if not isinstance(v, list) or len(v) != d or not all(_is_int(c) for c in v):
            raise ModelError(f"step {v!r} is not an integer {d}-vector")
        if not _is_number(p):
            raise ModelError(f"probability {p!r} is not a number")
        steps.append(tuple(int(c) for c in v))
        probs.append(float(p))
    measure = JumpMeasure(tuple(steps), tuple(probs))
    for b in branches:
        for n in b:
            if not isinstance(n, list) or len(n) != d or not all(_is_number(c) for c in n):
                raise ModelError(f"cone normal {n!r} is not a {d}-vector")
    cone = Cone(tuple(tuple(tuple(n) for n in b) for b in branches))
    model = WalkModel(measure, cone, name)
    if check_hypotheses:
        rep = check_a1(measure)
        if not rep.mean_nonzero:
            raise ModelError("A1(iii) violated: the mean jump is zero")
        if not rep.reachable:
            raise ModelError("A1(i) violated: the support does not generate the test box")
    return model


def load_model(path: str | Path, *, check_hypotheses: bool = True) -> WalkModel:
    """Read and validate a model JSON file.

    Raises
    ------
    ModelError
        On malformed JSON or any violated invariant.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"parse error in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelError("model file must hold a JSON object")
    return model_from_dict(data, check_hypotheses=check_hypotheses)


def save_model(model: WalkModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def as_point(x: Sequence[float] | np.ndarray, d: int | None = None) -> np.ndarray:
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if d is not None and a.shape != (d,):
        raise ModelError(f"expected a {d}-vector, got shape {a.shape}")
    return a


def as_lattice_point(x, d: int | None = None) -> tuple[int, ...]:
    a = np.atleast_1d(np.asarray(x))
    if d is not None and a.shape != (d,):
        raise ModelError(f"expected a {d}-vector, got shape {a.shape}")
    if not np.all(np.equal(np.round(a), a)):
        raise ModelError(f"{x!r} is not a lattice point")
    return tuple(int(c) for c in np.round(a))

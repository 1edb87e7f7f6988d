"""Exact, finitely described sets used as values of set-valued operators.

Four variants cover every set the toolkit produces:

* ``Singleton``     one point.
* ``BoxProduct``    a product of closed intervals, ends may be infinite.
* ``AffinePlusBox`` ``base + dirs @ t`` with ``t`` ranging over a box and
  ``dirs`` column-orthonormal.
* ``SpectralSet``   ``scale * U V^T + W`` over all ``W`` with ``U^T W = 0``,
  ``W V = 0`` and ``||W||_op <= radius``.  Matrices are flattened row-major
  so the common vector interface applies.

Membership and relative-interior margins are measured in the sup norm for
the box-like variants and in the operator norm for the spectral variant
(the respective dual norms of the l1 and nuclear regularizers).  All
variants are immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionMismatchError, InvalidSetError

__all__ = [
    "StructuredSet",
    "Singleton",
    "BoxProduct",
    "AffinePlusBox",
    "SpectralSet",
    "span_dimension",
    "set_from_json",
]

_ORTHO_TOL = 1e-12
_RANK_RTOL = 1e-10


def _as_vector(v, dim: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(v, dtype=float).ravel()
    if dim is not None and arr.size != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {arr.size}")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def _interval_center(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # Any interior point works as a canonical center; midpoints for bounded
    # intervals, unit offsets from a single finite end, zero when unbounded.
    c = np.zeros_like(lo)
    both = np.isfinite(lo) & np.isfinite(hi)
    c[both] = 0.5 * (lo[both] + hi[both])
    lo_only = np.isfinite(lo) & ~np.isfinite(hi)
    c[lo_only] = lo[lo_only] + 1.0
    hi_only = ~np.isfinite(lo) & np.isfinite(hi)
    c[hi_only] = hi[hi_only] - 1.0
    return c


def _interval_slack(lo: np.ndarray, hi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Per-coordinate distance of v to the nearest interval end (inf-safe)."""
    down = np.where(np.isfinite(lo), v - lo, np.inf)
    up = np.where(np.isfinite(hi), hi - v, np.inf)
    return np.minimum(down, up)


def _box_residual(lo: np.ndarray, hi: np.ndarray, v: np.ndarray) -> np.ndarray:
    below = np.where(np.isfinite(lo), np.maximum(0.0, lo - v), 0.0)
    above = np.where(np.isfinite(hi), np.maximum(0.0, v - hi), 0.0)
    return below + above


def _op_norm(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def _check_orthonormal(cols: np.ndarray, what: str) -> None:
    if cols.size == 0:
        return
    gram = cols.T @ cols
    err = np.max(np.abs(gram - np.eye(cols.shape[1])))
    if err > _ORTHO_TOL:
        raise InvalidSetError(f"{what} not column-orthonormal (error {err:.3e})")


def _bounds_to_json(arr: np.ndarray) -> list:
    return [None if not np.isfinite(x) else float(x) for x in arr]


def _bounds_from_json(vals: Sequence, sign: float) -> np.ndarray:
    return np.array([sign * np.inf if x is None else float(x) for x in vals])


class StructuredSet:
    """Common interface of the four set variants."""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def center(self) -> np.ndarray:
        """A canonical point of the set (always a member)."""
        raise NotImplementedError

    def contains(self, v, tol: float = 0.0) -> bool:
        """Whether dist(v, S) <= tol in the variant's membership norm."""
        if tol < 0:
            raise ValueError("tol must be nonnegative")
        return self.distance(v, "linf") <= tol

    def in_relative_interior(self, v, margin: float) -> bool:
        """Membership at sup-norm distance >= margin from the relative boundary."""
        raise NotImplementedError

    def distance(self, v, norm: str = "l2") -> float:
        raise NotImplementedError

    def translate(self, shift) -> "StructuredSet":
        raise NotImplementedError

    def _span_directions(self) -> np.ndarray:
        """Rows spanning the direction space Lin(S); may be empty."""
        raise NotImplementedError

    def to_json_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Singleton(StructuredSet):
    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", _freeze(_as_vector(self.point)))

    @property
    def dim(self) -> int:
        return self.point.size

    def center(self) -> np.ndarray:
        return self.point.copy()

    def in_relative_interior(self, v, margin: float) -> bool:
        if margin <= 0:
            raise ValueError("margin must be positive")
        # The relative interior of a point is the point itself.
        v = _as_vector(v, self.dim)
        tol = 1e-12 * (1.0 + np.max(np.abs(v), initial=0.0))
        return bool(np.max(np.abs(v - self.point), initial=0.0) <= tol)

    def distance(self, v, norm: str = "l2") -> float:
        v = _as_vector(v, self.dim)
        diff = v - self.point
        if norm == "l2":
            return float(np.linalg.norm(diff))
        if norm == "linf":
            return float(np.max(np.abs(diff), initial=0.0))
        raise ValueError(f"unknown norm {norm!r}")

    def translate(self, shift) -> "Singleton":
        return Singleton(self.point + _as_vector(shift, self.dim))

    def _span_directions(self) -> np.ndarray:
        return np.zeros((0, self.dim))

    def to_json_dict(self) -> dict:
        return {"variant": "singleton", "point": self.point.tolist()}


@dataclass(frozen=True)
class BoxProduct(StructuredSet):
    """Product of closed per-coordinate intervals; ends may be +-inf."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _as_vector(self.lo)
        hi = _as_vector(self.hi, lo.size)
        if np.any(lo > hi):
            raise InvalidSetError("box requires lo <= hi in every coordinate")
        object.__setattr__(self, "lo", _freeze(lo))
        object.__setattr__(self, "hi", _freeze(hi))

    @property
    def dim(self) -> int:
        return self.lo.size

    def free_mask(self) -> np.ndarray:
        return self.lo != self.hi

    def center(self) -> np.ndarray:
        return _interval_center(self.lo, self.hi)

    def in_relative_interior(self, v, margin: float) -> bool:
        if margin <= 0:
            raise ValueError("margin must be positive")
        v = _as_vector(v, self.dim)
        tol = 1e-12 * (1.0 + np.max(np.abs(v), initial=0.0))
        free = self.free_mask()
        pinned_ok = np.all(np.abs(v[~free] - self.lo[~free]) <= tol)
        if not pinned_ok:
            return False
        slack = _interval_slack(self.lo[free], self.hi[free], v[free])
        return bool(np.all(slack >= margin))

    def distance(self, v, norm: str = "l2") -> float:
        v = _as_vector(v, self.dim)
        r = _box_residual(self.lo, self.hi, v)
        if norm == "l2":
            return float(np.linalg.norm(r))
        if norm == "linf":
            return float(np.max(r, initial=0.0))
        raise ValueError(f"unknown norm {norm!r}")

    def translate(self, shift) -> "BoxProduct":
        s = _as_vector(shift, self.dim)
        return BoxProduct(self.lo + s, self.hi + s)

    def _span_directions(self) -> np.ndarray:
        free = np.flatnonzero(self.free_mask())
        dirs = np.zeros((free.size, self.dim))
        dirs[np.arange(free.size), free] = 1.0
        return dirs

    def to_json_dict(self) -> dict:
        return {
            "variant": "box",
            "lo": _bounds_to_json(self.lo),
            "hi": _bounds_to_json(self.hi),
        }


@dataclass(frozen=True)
class AffinePlusBox(StructuredSet):
    """Set ``{base + dirs @ t : lo <= t <= hi}`` with orthonormal dirs."""

    base: np.ndarray
    dirs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    _std_cols: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        base = _as_vector(self.base)
        dirs = np.asarray(self.dirs, dtype=float)
        if dirs.ndim != 2 or dirs.shape[0] != base.size:
            raise InvalidSetError("dirs must be (ambient, k)")
        _check_orthonormal(dirs, "dirs")
        lo = _as_vector(self.lo, dirs.shape[1])
        hi = _as_vector(self.hi, dirs.shape[1])
        if np.any(lo > hi):
            raise InvalidSetError("free-coordinate bounds require lo <= hi")
        object.__setattr__(self, "base", _freeze(base))
        object.__setattr__(self, "dirs", _freeze(dirs))
        object.__setattr__(self, "lo", _freeze(lo))
        object.__setattr__(self, "hi", _freeze(hi))
        object.__setattr__(self, "_std_cols", self._detect_standard_cols())

    def _detect_standard_cols(self) -> Optional[np.ndarray]:
        # index of the carrying ambient coordinate per column, signed; None
        # when some column is not +-e_i
        idx = np.zeros(self.dirs.shape[1], dtype=int)
        for j in range(self.dirs.shape[1]):
            col = self.dirs[:, j]
            big = np.flatnonzero(np.abs(col) > 1e-12)
            if big.size != 1 or abs(abs(col[big[0]]) - 1.0) > 1e-12:
                return None
            idx[j] = (big[0] + 1) * (1 if col[big[0]] > 0 else -1)
        return idx

    @property
    def dim(self) -> int:
        return self.base.size

    @property
    def n_free(self) -> int:
        return self.dirs.shape[1]

    def center(self) -> np.ndarray:
        return self.base + self.dirs @ _interval_center(self.lo, self.hi)

    def _coords(self, v: np.ndarray):
        d = v - self.base
        t = self.dirs.T @ d
        w = d - self.dirs @ t
        return t, w

    def in_relative_interior(self, v, margin: float) -> bool:
        if margin <= 0:
            raise ValueError("margin must be positive")
        v = _as_vector(v, self.dim)
        tol = 1e-12 * (1.0 + np.max(np.abs(v), initial=0.0))
        t, w = self._coords(v)
        if np.max(np.abs(w), initial=0.0) > tol:
            return False
        free = self.lo != self.hi
        if np.any(np.abs(t[~free] - self.lo[~free]) > tol):
            return False
        slack = _interval_slack(self.lo[free], self.hi[free], t[free])
        return bool(np.all(slack >= margin))

    def distance(self, v, norm: str = "l2") -> float:
        v = _as_vector(v, self.dim)
        t, w = self._coords(v)
        if norm == "l2":
            excess = _box_residual(self.lo, self.hi, t)
            return float(np.sqrt(np.dot(w, w) + np.dot(excess, excess)))
        if norm == "linf":
            if self._std_cols is not None:
                nearest = self.base + self.dirs @ np.clip(t, self.lo, self.hi)
                return float(np.max(np.abs(v - nearest), initial=0.0))
            return self._linf_distance_lp(v)
        raise ValueError(f"unknown norm {norm!r}")

    def _linf_distance_lp(self, v: np.ndarray) -> float:
        # min s  s.t.  -s <= base + dirs t - v <= s,  lo <= t <= hi
        n, k = self.dim, self.n_free
        c = np.zeros(k + 1)
        c[-1] = 1.0
        a_ub = np.block(
            [[self.dirs, -np.ones((n, 1))], [-self.dirs, -np.ones((n, 1))]]
        )
        rhs = v - self.base
        b_ub = np.concatenate([rhs, -rhs])
        bounds = [(lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None)
                  for lo, hi in zip(self.lo, self.hi)] + [(0.0, None)]
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if not res.success:
            raise InvalidSetError(f"sup-norm distance LP failed: {res.message}")
        return float(res.fun)

    def translate(self, shift) -> "AffinePlusBox":
        return AffinePlusBox(self.base + _as_vector(shift, self.dim),
                             self.dirs, self.lo, self.hi)

    def _span_directions(self) -> np.ndarray:
        free = self.lo != self.hi
        return self.dirs[:, free].T

    def to_json_dict(self) -> dict:
        return {
            "variant": "affine_box",
            "base": self.base.tolist(),
            "dirs": self.dirs.tolist(),
            "lo": _bounds_to_json(self.lo),
            "hi": _bounds_to_json(self.hi),
        }


@dataclass(frozen=True)
class SpectralSet(StructuredSet):
    """Matrices ``scale * U V^T + W`` with doubly orthogonal bounded W.

    The constraints on ``W`` are ``U^T W = 0``, ``W V = 0`` and
    ``||W||_op <= radius``.  This is the shape of nuclear-norm
    subdifferentials: ``U``/``V`` carry the active singular directions,
    ``W`` the free spectral face.  Vectors passed to the membership and
    distance queries are row-major flattenings of p x q matrices.
    """

    u: np.ndarray
    v: np.ndarray
    radius: float
    scale: float = 1.0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.ndim != 2 or v.ndim != 2 or u.shape[1] != v.shape[1]:
            raise InvalidSetError("u, v must be (p, r) and (q, r)")
        _check_orthonormal(u, "u")
        _check_orthonormal(v, "v")
        if self.radius < 0:
            raise InvalidSetError("radius must be nonnegative")
        object.__setattr__(self, "u", _freeze(u))
        object.__setattr__(self, "v", _freeze(v))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def shape(self) -> tuple:
        return (self.u.shape[0], self.v.shape[0])

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    @property
    def dim(self) -> int:
        p, q = self.shape
        return p * q

    def center_matrix(self) -> np.ndarray:
        return self.scale * (self.u @ self.v.T)

    def center(self) -> np.ndarray:
        return self.center_matrix().ravel()

    def _split(self, m: np.ndarray):
        """Split m - center into the W block and its complement."""
        d = m - self.center_matrix()
        pu = self.u @ self.u.T
        pv = self.v @ self.v.T
        p, q = self.shape
        dw = (np.eye(p) - pu) @ d @ (np.eye(q) - pv)
        return dw, d - dw

    def _as_matrix(self, v) -> np.ndarray:
        arr = _as_vector(v, self.dim)
        return arr.reshape(self.shape)

    def contains(self, v, tol: float = 0.0) -> bool:
        if tol < 0:
            raise ValueError("tol must be nonnegative")
        dw, dc = self._split(self._as_matrix(v))
        err = max(_op_norm(dc), max(0.0, _op_norm(dw) - self.radius))
        return err <= tol

    def in_relative_interior(self, v, margin: float) -> bool:
        if margin <= 0:
            raise ValueError("margin must be positive")
        m = self._as_matrix(v)
        tol = 1e-12 * (1.0 + np.max(np.abs(m), initial=0.0))
        dw, dc = self._split(m)
        if _op_norm(dc) > tol:
            return False
        return self.radius - _op_norm(dw) >= margin

    def distance(self, v, norm: str = "l2") -> float:
        """Distance of a flattened matrix to the set.

        ``l2`` is the exact Frobenius distance.  ``linf`` is the operator
        norm analogue used for membership: the larger of the structural
        residual and the spectral excess of the W block.
        """
        dw, dc = self._split(self._as_matrix(v))
        if norm == "l2":
            sig = np.linalg.svd(dw, compute_uv=False) if dw.size else np.zeros(0)
            excess = np.maximum(0.0, sig - self.radius)
            return float(np.sqrt(np.sum(dc * dc) + np.sum(excess * excess)))
        if norm == "linf":
            return float(max(_op_norm(dc), max(0.0, _op_norm(dw) - self.radius)))
        raise ValueError(f"unknown norm {norm!r}")

    def translate(self, shift) -> "StructuredSet":
        raise InvalidSetError("spectral sets do not support generic translation")

    def _span_directions(self) -> np.ndarray:
        if self.radius == 0.0:
            return np.zeros((0, self.dim))
        p, q = self.shape
        # Orthonormal complements of the active singular directions.
        u_perp = np.linalg.svd(np.eye(p) - self.u @ self.u.T)[0][:, : p - self.rank]
        v_perp = np.linalg.svd(np.eye(q) - self.v @ self.v.T)[0][:, : q - self.rank]
        dirs = []
        for i in range(u_perp.shape[1]):
            for j in range(v_perp.shape[1]):
                dirs.append(np.outer(u_perp[:, i], v_perp[:, j]).ravel())
        if not dirs:
            return np.zeros((0, self.dim))
        return np.array(dirs)

    def to_json_dict(self) -> dict:
        return {
            "variant": "spectral",
            "u": self.u.tolist(),
            "v": self.v.tolist(),
            "radius": self.radius,
            "scale": self.scale,
        }


def span_dimension(entries, rank_rtol: float = _RANK_RTOL) -> int:
    """Dimension of the direction span of a union of anchored sets.

    Each entry is ``(anchor, set)``.  The span is measured on difference
    vectors: base points relative to the first base point, plus every free
    direction of every set.  Singular values below ``rank_rtol`` times the
    largest count as zero.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("span_dimension requires at least one (anchor, set)")
    points = []
    rows = []
    dim = None
    for anchor, s in entries:
        a = _as_vector(anchor)
        if dim is None:
            dim = a.size
        if a.size != dim or s.dim != dim:
            raise DimensionMismatchError("all sets must share one ambient space")
        points.append(a + s.center())
        d = s._span_directions()
        if d.size:
            rows.append(d)
    base = points[0]
    diffs = [p - base for p in points[1:]]
    if diffs:
        rows.append(np.array(diffs))
    if not rows:
        return 0
    stacked = np.vstack(rows)
    sig = np.linalg.svd(stacked, compute_uv=False)
    if sig.size == 0 or sig[0] == 0.0:
        return 0
    return int(np.sum(sig > rank_rtol * sig[0]))


def set_from_json(data: dict) -> StructuredSet:
    variant = data.get("variant")
    if variant == "singleton":
        return Singleton(np.array(data["point"], dtype=float))
    if variant == "box":
        return BoxProduct(_bounds_from_json(data["lo"], -1.0),
                          _bounds_from_json(data["hi"], +1.0))
    if variant == "affine_box":
        return AffinePlusBox(np.array(data["base"], dtype=float),
                             np.array(data["dirs"], dtype=float),
                             _bounds_from_json(data["lo"], -1.0),
                             _bounds_from_json(data["hi"], +1.0))
    if variant == "spectral":
        return SpectralSet(np.array(data["u"], dtype=float),
                           np.array(data["v"], dtype=float),
                           float(data["radius"]), float(data.get("scale", 1.0)))
    raise InvalidSetError(f"unknown set variant {variant!r}")

"""Partly smooth set-valued operators and their calculus combinators.

Concrete operators: scaled l1 / l0 / nuclear-norm subdifferentials, box
normal cones and single-valued smooth maps.  Combinators: sums, products,
affine precomposition ``G^T A(G z + h)`` and smooth perturbations.  Every
operator exposes

* ``eval(x)``                an exact :class:`~pssso.sets.StructuredSet`,
* ``resolvent(z, gamma)``    the point ``(Id + gamma A)^{-1}(z)`` where a
  closed form exists,
* ``active_manifold(x)``     the manifold the operator is partly smooth
  along at ``x``.

Resolvent conventions: the l1 resolvent is the soft threshold at
``gamma * mu``, the l0 resolvent the hard threshold zeroing entries with
``|z_i| <= sqrt(2 gamma mu)`` (ties go to zero so the map is a function),
and the nuclear resolvent soft-thresholds singular values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionMismatchError,
    EmptyDomainError,
    InvalidSetError,
    NoClosedFormError,
)
from .manifolds import (
    AffineSubspace,
    FixedRank,
    FixedSupport,
    ManifoldDesc,
    ProductManifold,
    sample_on_manifold,
)
from .sets import (
    AffinePlusBox,
    BoxProduct,
    Singleton,
    SpectralSet,
    StructuredSet,
    _as_vector,
)

__all__ = [
    "PartlySmoothOperator",
    "SubdiffL1",
    "SubdiffL0",
    "SubdiffNuclear",
    "NormalConeBox",
    "SmoothMap",
    "SumOp",
    "ProductOp",
    "Perturbed",
    "LinearPrecompose",
    "LocalizedOperator",
    "localize",
    "check_continuity_along_manifold",
    "ContinuityResult",
    "soft_threshold",
    "hard_threshold",
    "singular_value_threshold",
    "zero_pattern_tolerance",
    "detect_support",
    "detect_rank",
]


def zero_pattern_tolerance(values: np.ndarray) -> float:
    """Relative floor below which entries or singular values count as zero."""
    return 1e-10 * (1.0 + np.max(np.abs(values), initial=0.0))


def detect_support(x: np.ndarray, tol: Optional[float] = None) -> frozenset:
    x = np.asarray(x, dtype=float)
    if tol is None:
        tol = zero_pattern_tolerance(x)
    return frozenset(int(i) for i in np.flatnonzero(np.abs(x) > tol))


def detect_rank(sigma: np.ndarray, tol: Optional[float] = None) -> int:
    sigma = np.asarray(sigma, dtype=float)
    if tol is None:
        tol = zero_pattern_tolerance(sigma)
    return int(np.sum(sigma > tol))


def soft_threshold(z: np.ndarray, thresh: float) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)


def hard_threshold(z: np.ndarray, thresh: float) -> np.ndarray:
    # Tie |z_i| == thresh selects zero, the smaller-support minimizer.
    return np.where(np.abs(z) <= thresh, 0.0, z)


def singular_value_threshold(m: np.ndarray, thresh: float) -> np.ndarray:
    u, sig, vt = np.linalg.svd(m, full_matrices=False)
    return (u * np.maximum(sig - thresh, 0.0)) @ vt


class PartlySmoothOperator:
    """Common interface of the operator variants."""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def eval(self, x) -> StructuredSet:
        raise NotImplementedError

    def resolvent(self, z, gamma: float) -> np.ndarray:
        raise NotImplementedError

    def active_manifold(self, x, tol: Optional[float] = None) -> ManifoldDesc:
        raise NotImplementedError

    def _check_gamma(self, gamma: float) -> None:
        if gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class SubdiffL1(PartlySmoothOperator):
    """Subdifferential of ``mu * ||.||_1``; values are boxes ``[-mu, mu]``
    on the zero pattern and pinned signs elsewhere."""

    mu: float
    n: int

    def __post_init__(self):
        if self.mu <= 0:
            raise InvalidSetError("mu must be positive")

    @property
    def dim(self) -> int:
        return self.n

    def eval(self, x) -> BoxProduct:
        x = _as_vector(x, self.n)
        tol = zero_pattern_tolerance(x)
        lo = np.where(x > tol, self.mu, -self.mu)
        hi = np.where(x < -tol, -self.mu, self.mu)
        return BoxProduct(lo, hi)

    def resolvent(self, z, gamma: float) -> np.ndarray:
        self._check_gamma(gamma)
        return soft_threshold(_as_vector(z, self.n), gamma * self.mu)

    def active_manifold(self, x, tol: Optional[float] = None) -> FixedSupport:
        return FixedSupport(detect_support(_as_vector(x, self.n), tol), self.n)


@dataclass(frozen=True)
class SubdiffL0(PartlySmoothOperator):
    """Limiting subdifferential of ``mu * ||.||_0``: the span of the
    coordinate directions off the support (zero on it, free elsewhere)."""

    mu: float
    n: int

    def __post_init__(self):
        if self.mu <= 0:
            raise InvalidSetError("mu must be positive")

    @property
    def dim(self) -> int:
        return self.n

    def eval(self, x) -> BoxProduct:
        x = _as_vector(x, self.n)
        tol = zero_pattern_tolerance(x)
        on = np.abs(x) > tol
        lo = np.where(on, 0.0, -np.inf)
        hi = np.where(on, 0.0, np.inf)
        return BoxProduct(lo, hi)

    def resolvent(self, z, gamma: float) -> np.ndarray:
        self._check_gamma(gamma)
        return hard_threshold(_as_vector(z, self.n), np.sqrt(2.0 * gamma * self.mu))

    def active_manifold(self, x, tol: Optional[float] = None) -> FixedSupport:
        return FixedSupport(detect_support(_as_vector(x, self.n), tol), self.n)


@dataclass(frozen=True)
class SubdiffNuclear(PartlySmoothOperator):
    """Subdifferential of ``mu * ||.||_*`` on p x q matrices (flattened)."""

    mu: float
    p: int
    q: int

    def __post_init__(self):
        if self.mu <= 0:
            raise InvalidSetError("mu must be positive")

    @property
    def dim(self) -> int:
        return self.p * self.q

    def _as_matrix(self, x) -> np.ndarray:
        return _as_vector(x, self.dim).reshape(self.p, self.q)

    def eval(self, x) -> SpectralSet:
        u, sig, vt = np.linalg.svd(self._as_matrix(x))
        r = detect_rank(sig)
        return SpectralSet(u[:, :r], vt[:r].T, radius=self.mu, scale=self.mu)

    def resolvent(self, z, gamma: float) -> np.ndarray:
        self._check_gamma(gamma)
        return singular_value_threshold(self._as_matrix(z), gamma * self.mu).ravel()

    def active_manifold(self, x, tol: Optional[float] = None) -> FixedRank:
        sig = np.linalg.svd(self._as_matrix(x), compute_uv=False)
        return FixedRank(detect_rank(sig, tol), self.p, self.q)


@dataclass(frozen=True)
class NormalConeBox(PartlySmoothOperator):
    """Normal cone operator of a box ``[lo, hi]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _as_vector(self.lo)
        hi = _as_vector(self.hi, lo.size)
        if np.any(lo > hi):
            raise InvalidSetError("box requires lo <= hi")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def _face_masks(self, x: np.ndarray):
        tol = zero_pattern_tolerance(x)
        if np.any(x < self.lo - tol) or np.any(x > self.hi + tol):
            raise EmptyDomainError("point lies outside the box")
        at_lo = np.abs(x - self.lo) <= tol
        at_hi = np.abs(x - self.hi) <= tol
        return at_lo, at_hi

    def eval(self, x) -> BoxProduct:
        x = _as_vector(x, self.dim)
        at_lo, at_hi = self._face_masks(x)
        lo = np.where(at_lo, -np.inf, 0.0)
        hi = np.where(at_hi, np.inf, 0.0)
        return BoxProduct(lo, hi)

    def resolvent(self, z, gamma: float) -> np.ndarray:
        self._check_gamma(gamma)
        return np.clip(_as_vector(z, self.dim), self.lo, self.hi)

    def active_manifold(self, x, tol: Optional[float] = None) -> AffineSubspace:
        x = _as_vector(x, self.dim)
        at_lo, at_hi = self._face_masks(x)
        pinned = at_lo | at_hi
        base = np.where(at_lo, self.lo, np.where(at_hi, self.hi, 0.0))
        free = np.flatnonzero(~pinned)
        basis = np.zeros((self.dim, free.size))
        basis[free, np.arange(free.size)] = 1.0
        return AffineSubspace(np.where(pinned, base, 0.0), basis)


@dataclass(frozen=True)
class SmoothMap(PartlySmoothOperator):
    """Single-valued smooth operator with known Lipschitz and monotonicity
    moduli.  ``linear_part``/``offset`` record an affine structure
    ``x -> h x + c`` (h scalar) or ``x -> H x + c`` when available, which
    unlocks exact resolvents and composite closed forms."""

    n: int
    fn: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    strong_convexity: float = 0.0
    linear_part: object = None
    offset: Optional[np.ndarray] = None

    @classmethod
    def affine(cls, h, c, n: Optional[int] = None) -> "SmoothMap":
        c = _as_vector(c)
        if n is None:
            n = c.size
        if np.isscalar(h) or np.ndim(h) == 0:
            h = float(h)
            lip = abs(h)
            kappa = max(0.0, h)
            fn = lambda x, _h=h, _c=c: _h * x + _c
        else:
            h = np.asarray(h, dtype=float)
            if h.shape != (n, n):
                raise DimensionMismatchError("linear part must be (n, n)")
            sym = 0.5 * (h + h.T)
            eig = np.linalg.eigvalsh(sym)
            lip = float(np.linalg.norm(h, 2))
            kappa = float(max(0.0, eig.min()))
            fn = lambda x, _h=h, _c=c: _h @ x + _c
        return cls(n=n, fn=fn, lipschitz=lip, strong_convexity=kappa,
                   linear_part=h, offset=c)

    @classmethod
    def zero(cls, n: int) -> "SmoothMap":
        return cls.affine(0.0, np.zeros(n))

    @property
    def dim(self) -> int:
        return self.n

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.fn(_as_vector(x, self.n)), dtype=float)

    def scalar_affine(self) -> Optional[Tuple[float, np.ndarray]]:
        if self.linear_part is None or not np.isscalar(self.linear_part):
            return None
        return float(self.linear_part), np.asarray(self.offset, dtype=float)

    def eval(self, x) -> Singleton:
        return Singleton(self(x))

    def resolvent(self, z, gamma: float) -> np.ndarray:
        self._check_gamma(gamma)
        z = _as_vector(z, self.n)
        if self.linear_part is not None:
            c = np.asarray(self.offset, dtype=float)
            if np.isscalar(self.linear_part):
                return (z - gamma * c) / (1.0 + gamma * self.linear_part)
            h = np.asarray(self.linear_part, dtype=float)
            return np.linalg.solve(np.eye(self.n) + gamma * h, z - gamma * c)
        return self._resolvent_fixed_point(z, gamma)

    def _resolvent_fixed_point(self, z: np.ndarray, gamma: float,
                               tol: float = 1e-12, max_iter: int = 100000):
        # Damped iteration on F(x) = x + gamma fn(x) - z; the damping
        # (1 + gamma kappa) / (1 + gamma L)^2 makes x -> x - eta F(x)
        # a contraction for monotone Lipschitz fn.
        lip = 1.0 + gamma * self.lipschitz
        eta = (1.0 + gamma * self.strong_convexity) / lip ** 2
        x = z.copy()
        for _ in range(max_iter):
            f = x + gamma * self(x) - z
            resid = np.linalg.norm(f)
            if resid <= tol:
                return x
            x = x - eta * f
        raise ConvergenceError("smooth-map resolvent did not reach tolerance")

    def active_manifold(self, x=None, tol: Optional[float] = None) -> AffineSubspace:
        # Smooth single-valued operators are partly smooth along the whole
        # space: the normal space is trivial.
        return AffineSubspace(np.zeros(self.n), np.eye(self.n))


def _minkowski_pair(a: StructuredSet, b: StructuredSet) -> StructuredSet:
    if a.dim != b.dim:
        raise DimensionMismatchError("summands live in different spaces")
    if isinstance(b, Singleton):
        a, b = b, a
    if isinstance(a, Singleton):
        if isinstance(b, SpectralSet):
            raise NoClosedFormError(
                "singleton + spectral sum is not representable; decompose the operator")
        return b.translate(a.point)
    if isinstance(a, BoxProduct) and isinstance(b, BoxProduct):
        return BoxProduct(a.lo + b.lo, a.hi + b.hi)
    raise NoClosedFormError(
        f"Minkowski sum of {type(a).__name__} and {type(b).__name__} is not "
        "representable; decompose the operator")


@dataclass(frozen=True)
class SumOp(PartlySmoothOperator):
    """Pointwise Minkowski sum of operators on one space."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise InvalidSetError("sum needs at least one part")
        if len({p.dim for p in parts}) != 1:
            raise DimensionMismatchError("sum parts must share the ambient space")
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def eval(self, x) -> StructuredSet:
        out = self.parts[0].eval(x)
        for p in self.parts[1:]:
            out = _minkowski_pair(out, p.eval(x))
        return out

    def _split_smooth(self):
        smooth = [p for p in self.parts if isinstance(p, SmoothMap)]
        other = [p for p in self.parts if not isinstance(p, SmoothMap)]
        return other, smooth

    def resolvent(self, z, gamma: float) -> np.ndarray:
        self._check_gamma(gamma)
        other, smooth = self._split_smooth()
        if len(other) == 1 and len(smooth) == 1:
            return Perturbed(other[0], smooth[0]).resolvent(z, gamma)
        if len(other) == 0 and len(smooth) == 1:
            return smooth[0].resolvent(z, gamma)
        raise NoClosedFormError("no closed-form resolvent for this sum")

    def active_manifold(self, x, tol: Optional[float] = None) -> ManifoldDesc:
        other, _ = self._split_smooth()
        if len(other) != 1:
            raise NoClosedFormError("sum lacks a single nonsmooth anchor")
        return other[0].active_manifold(x, tol)


@dataclass(frozen=True)
class Perturbed(PartlySmoothOperator):
    """``base + smooth`` for a set-valued base and single-valued smooth map.

    Partly smooth along the base's manifold; the resolvent has a closed
    form when the smooth part is affine with a scalar linear part, via the
    scaled and shifted resolvent of the base.
    """

    base: PartlySmoothOperator
    smooth: SmoothMap

    def __post_init__(self):
        if self.base.dim != self.smooth.dim:
            raise DimensionMismatchError("base and smooth dimensions differ")

    @property
    def dim(self) -> int:
        return self.base.dim

    def eval(self, x) -> StructuredSet:
        return _minkowski_pair(self.base.eval(x), self.smooth.eval(x))

    def resolvent(self, z, gamma: float) -> np.ndarray:
        self._check_gamma(gamma)
        aff = self.smooth.scalar_affine()
        if aff is None:
            raise NoClosedFormError(
                "perturbed resolvent needs a scalar affine smooth part")
        h, c = aff
        z = _as_vector(z, self.dim)
        scale = 1.0 + gamma * h
        if scale <= 0:
            raise NoClosedFormError("1 + gamma*h must be positive")
        return self.base.resolvent((z - gamma * c) / scale, gamma / scale)

    def active_manifold(self, x, tol: Optional[float] = None) -> ManifoldDesc:
        return self.base.active_manifold(x, tol)


@dataclass(frozen=True)
class ProductOp(PartlySmoothOperator):
    """Block-separable operator acting independently on stacked blocks."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise InvalidSetError("product needs at least one part")
        object.__setattr__(self, "parts", parts)

    @property
    def dim(self) -> int:
        return sum(p.dim for p in self.parts)

    def _slices(self):
        off = 0
        for p in self.parts:
            yield p, slice(off, off + p.dim)
            off += p.dim

    def eval(self, x) -> StructuredSet:
        x = _as_vector(x, self.dim)
        values = [p.eval(x[s]) for p, s in self._slices()]
        return _product_merge(values)

    def resolvent(self, z, gamma: float) -> np.ndarray:
        self._check_gamma(gamma)
        z = _as_vector(z, self.dim)
        return np.concatenate([p.resolvent(z[s], gamma) for p, s in self._slices()])

    def active_manifold(self, x, tol: Optional[float] = None) -> ProductManifold:
        x = _as_vector(x, self.dim)
        return ProductManifold(tuple(p.active_manifold(x[s], tol)
                                     for p, s in self._slices()))


def _product_merge(values) -> StructuredSet:
    if len(values) == 1:
        return values[0]
    if all(isinstance(v, Singleton) for v in values):
        return Singleton(np.concatenate([v.point for v in values]))
    box_like = (Singleton, BoxProduct)
    if all(isinstance(v, box_like) for v in values):
        lo = np.concatenate([v.point if isinstance(v, Singleton) else v.lo
                             for v in values])
        hi = np.concatenate([v.point if isinstance(v, Singleton) else v.hi
                             for v in values])
        return BoxProduct(lo, hi)
    affine_like = (Singleton, BoxProduct, AffinePlusBox)
    if all(isinstance(v, affine_like) for v in values):
        bases, dir_blocks, los, his = [], [], [], []
        offsets = np.cumsum([0] + [v.dim for v in values])
        total = offsets[-1]
        for v, off in zip(values, offsets):
            if isinstance(v, Singleton):
                bases.append(v.point)
                continue
            if isinstance(v, BoxProduct):
                free = v.free_mask()
                base = np.where(free, 0.0, v.lo)
                bases.append(base)
                cols = np.zeros((total, int(free.sum())))
                cols[off + np.flatnonzero(free), np.arange(int(free.sum()))] = 1.0
                dir_blocks.append(cols)
                los.append(v.lo[free])
                his.append(v.hi[free])
            else:
                bases.append(v.base)
                cols = np.zeros((total, v.n_free))
                cols[off:off + v.dim] = v.dirs
                dir_blocks.append(cols)
                los.append(v.lo)
                his.append(v.hi)
        dirs = np.hstack(dir_blocks) if dir_blocks else np.zeros((total, 0))
        lo = np.concatenate(los) if los else np.zeros(0)
        hi = np.concatenate(his) if his else np.zeros(0)
        return AffinePlusBox(np.concatenate(bases), dirs, lo, hi)
    raise NoClosedFormError("product of these value-set variants is not representable")


@dataclass(frozen=True)
class LinearPrecompose(PartlySmoothOperator):
    """``z -> G^T A(G z + h)`` for an affine map ``Phi(z) = G z + h``."""

    inner: PartlySmoothOperator
    g: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        h = _as_vector(self.h)
        if g.ndim != 2 or g.shape[0] != self.inner.dim or h.size != g.shape[0]:
            raise DimensionMismatchError("G must map R^d into the inner space")
        g.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.g.shape[1]

    def eval(self, z) -> StructuredSet:
        z = _as_vector(z, self.dim)
        inner = self.inner.eval(self.g @ z + self.h)
        return self._push_through(inner)

    def _push_through(self, s: StructuredSet) -> StructuredSet:
        gt = self.g.T
        if isinstance(s, Singleton):
            return Singleton(gt @ s.point)
        if isinstance(s, BoxProduct):
            free = np.flatnonzero(s.free_mask())
            pinned_center = np.where(s.free_mask(), 0.0, s.lo)
            base = gt @ pinned_center
            gens = gt[:, free]
            norms = np.linalg.norm(gens, axis=0)
            keep = norms > 1e-14
            gens, norms = gens[:, keep], norms[keep]
            if gens.shape[1]:
                gram = gens.T @ gens
                off = gram - np.diag(np.diag(gram))
                if np.max(np.abs(off)) > 1e-12 * (1.0 + np.max(np.diag(gram))):
                    raise NoClosedFormError(
                        "image of a box is a zonotope with non-orthogonal "
                        "generators; decompose the operator instead")
            dirs = gens / norms if gens.shape[1] else gens
            lo = s.lo[free][keep] * norms
            hi = s.hi[free][keep] * norms
            swap = lo > hi
            lo[swap], hi[swap] = hi[swap], lo[swap]
            return AffinePlusBox(base, dirs, lo, hi)
        raise NoClosedFormError(
            f"cannot push a {type(s).__name__} through the adjoint map")

    def resolvent(self, z, gamma: float) -> np.ndarray:
        raise NoClosedFormError("precomposed operators have no closed-form resolvent")

    def active_manifold(self, x, tol: Optional[float] = None) -> ManifoldDesc:
        raise NoClosedFormError("precomposed operators carry no manifold metadata")

    def transversal_at(self, z) -> bool:
        """Whether ``ker(G^T)`` meets the inner normal space only at zero."""
        z = _as_vector(z, self.dim)
        phi_z = self.g @ z + self.h
        m = self.inner.active_manifold(phi_z)
        _, pn = m.projectors(phi_z)
        nb = _range_basis(pn)
        if nb.shape[1] == 0:
            return True
        ker_basis = _kernel_basis(self.g.T)
        if ker_basis.shape[1] == 0:
            return True
        stacked = np.hstack([ker_basis, nb])
        rank = np.linalg.matrix_rank(stacked, tol=1e-10)
        return rank == ker_basis.shape[1] + nb.shape[1]


def _kernel_basis(a: np.ndarray) -> np.ndarray:
    _, sig, vt = np.linalg.svd(a)
    tol = 1e-12 * max(1.0, sig[0] if sig.size else 1.0)
    rank = int(np.sum(sig > tol))
    return vt[rank:].T


def _range_basis(projector: np.ndarray) -> np.ndarray:
    u, sig, _ = np.linalg.svd(projector)
    rank = int(np.sum(sig > 0.5))
    return u[:, :rank]


@dataclass(frozen=True)
class LocalizedOperator:
    """Graph localization of an operator around a point ``(xbar, ubar)``.

    ``eval(x)`` intersects the base value set with the sup-norm ball of
    radius ``eps`` around ``ubar`` whenever ``x`` is within ``eps`` of
    ``xbar`` (operator norm for spectral values, Frobenius for the matrix
    primal ball), and is empty otherwise; ``None`` encodes the empty set.
    """

    base: PartlySmoothOperator
    xbar: np.ndarray
    ubar: np.ndarray
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "xbar", _as_vector(self.xbar, self.base.dim))
        object.__setattr__(self, "ubar", _as_vector(self.ubar, self.base.dim))
        if self.eps <= 0:
            raise InvalidSetError("eps must be positive")

    @property
    def dim(self) -> int:
        return self.base.dim

    def _primal_distance(self, x: np.ndarray) -> float:
        if _spectral_base(self.base) is not None:
            return float(np.linalg.norm(x - self.xbar))
        return float(np.max(np.abs(x - self.xbar), initial=0.0))

    def eval(self, x) -> Optional[StructuredSet]:
        x = _as_vector(x, self.dim)
        if self._primal_distance(x) >= self.eps:
            return None
        return _intersect_dual_ball(self.base.eval(x), self.ubar, self.eps)


def _spectral_base(op: PartlySmoothOperator) -> Optional[SubdiffNuclear]:
    if isinstance(op, SubdiffNuclear):
        return op
    if isinstance(op, Perturbed):
        return _spectral_base(op.base)
    return None


def _intersect_dual_ball(s: StructuredSet, center: np.ndarray,
                         eps: float) -> Optional[StructuredSet]:
    if isinstance(s, Singleton):
        if np.max(np.abs(s.point - center), initial=0.0) <= eps:
            return s
        return None
    if isinstance(s, BoxProduct):
        lo = np.maximum(s.lo, center - eps)
        hi = np.minimum(s.hi, center + eps)
        if np.any(lo > hi):
            return None
        return BoxProduct(lo, hi)
    if isinstance(s, AffinePlusBox):
        if s._std_cols is None:
            raise NoClosedFormError(
                "ball intersection needs coordinate-aligned free directions")
        lo, hi = s.lo.copy(), s.hi.copy()
        carried = np.zeros(s.dim, dtype=bool)
        for j, signed in enumerate(s._std_cols):
            i = abs(signed) - 1
            sgn = 1.0 if signed > 0 else -1.0
            carried[i] = True
            a = (center[i] - eps - s.base[i]) * sgn
            b = (center[i] + eps - s.base[i]) * sgn
            a, b = min(a, b), max(a, b)
            lo[j] = max(lo[j], a)
            hi[j] = min(hi[j], b)
            if lo[j] > hi[j]:
                return None
        pinned = ~carried
        if np.max(np.abs(s.base[pinned] - center[pinned]), initial=0.0) > eps:
            return None
        return AffinePlusBox(s.base, s.dirs, lo, hi)
    if isinstance(s, SpectralSet):
        # Only the centered case stays representable: the ball (operator
        # norm) around the set's own center clips the radius.
        resid = np.max(np.abs(center - s.center()), initial=0.0)
        if resid <= 1e-12 * (1.0 + np.max(np.abs(center), initial=0.0)):
            return SpectralSet(s.u, s.v, min(s.radius, eps), s.scale)
        raise NoClosedFormError(
            "spectral localization is representable only around the set center")
    raise NoClosedFormError(f"cannot localize a {type(s).__name__}")


def localize(op: PartlySmoothOperator, xbar, ubar, eps: float) -> LocalizedOperator:
    """Localization of ``op`` around a graph point ``(xbar, ubar)``."""
    xbar = _as_vector(xbar, op.dim)
    ubar = _as_vector(ubar, op.dim)
    tol = 1e-9 * (1.0 + np.max(np.abs(ubar), initial=0.0))
    if not op.eval(xbar).contains(ubar, tol):
        raise InvalidSetError("ubar is not a dual vector of xbar")
    return LocalizedOperator(op, xbar, ubar, eps)


@dataclass(frozen=True)
class ContinuityResult:
    ok: bool
    witness: Optional[np.ndarray] = None

    def __bool__(self) -> bool:
        return self.ok


def _face_parameters(s: StructuredSet):
    """Canonical parameter arrays for comparing nearby value sets."""
    if isinstance(s, Singleton):
        return [("point", s.point, None)]
    if isinstance(s, BoxProduct):
        lo_fin, hi_fin = np.isfinite(s.lo), np.isfinite(s.hi)
        return [
            ("lo", np.where(lo_fin, s.lo, 0.0), lo_fin),
            ("hi", np.where(hi_fin, s.hi, 0.0), hi_fin),
        ]
    if isinstance(s, AffinePlusBox):
        lo_fin, hi_fin = np.isfinite(s.lo), np.isfinite(s.hi)
        return [
            ("base", s.base, None),
            ("proj", (s.dirs @ s.dirs.T).ravel(), None),
            ("lo", np.where(lo_fin, s.lo, 0.0), lo_fin),
            ("hi", np.where(hi_fin, s.hi, 0.0), hi_fin),
        ]
    if isinstance(s, SpectralSet):
        return [
            ("center", s.center(), None),
            ("radius", np.array([s.radius]), None),
        ]
    raise NoClosedFormError(f"no face parameters for {type(s).__name__}")


def check_continuity_along_manifold(op: PartlySmoothOperator, m: ManifoldDesc,
                                    xbar, radius: float, n_samples: int,
                                    tol: float, seed: int = 0) -> ContinuityResult:
    """Sampled continuity of ``x -> op.eval(x)`` along ``m`` near ``xbar``.

    Every face parameter of the value set at a sampled manifold point must
    stay within ``tol * ||x - xbar||_inf + tol`` of its value at ``xbar``;
    the first violating sample is returned as a witness.  Genuine jumps are
    caught at any radius; for value maps that merely vary smoothly along
    the manifold, pick ``radius`` on the order of ``tol`` so the constant
    term absorbs the drift.
    """
    xbar = _as_vector(xbar, op.dim)
    ref = _face_parameters(op.eval(xbar))
    rng = np.random.default_rng(seed)
    for x in sample_on_manifold(m, xbar, radius, n_samples, rng):
        dist = float(np.max(np.abs(x - xbar), initial=0.0))
        allowance = tol * dist + tol
        try:
            params = _face_parameters(op.eval(x))
        except NoClosedFormError:
            return ContinuityResult(False, x)
        if len(params) != len(ref):
            return ContinuityResult(False, x)
        for (name_a, val_a, mask_a), (name_b, val_b, mask_b) in zip(ref, params):
            if name_a != name_b or val_a.shape != val_b.shape:
                return ContinuityResult(False, x)
            if (mask_a is None) != (mask_b is None):
                return ContinuityResult(False, x)
            if mask_a is not None and np.any(mask_a != mask_b):
                return ContinuityResult(False, x)
            if np.max(np.abs(val_a - val_b), initial=0.0) > allowance:
                return ContinuityResult(False, x)
    return ContinuityResult(True, None)

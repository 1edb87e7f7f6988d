"""Active-manifold descriptors: membership, projectors, enlargement.

Supported families are fixed-support coordinate subspaces, fixed-rank
matrix manifolds, affine subspaces and finite products of these.  Only
first-order data is exposed (membership tests and tangent/normal
projectors); this is all the identification machinery needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DimensionMismatchError, InvalidSetError, NoClosedFormError, NotOnManifoldError
from .sets import AffinePlusBox, BoxProduct, SpectralSet, StructuredSet, _as_vector, _check_orthonormal, _freeze, _interval_slack

__all__ = [
    "ManifoldDesc",
    "FixedSupport",
    "FixedRank",
    "AffineSubspace",
    "ProductManifold",
    "enlarge_manifold",
    "sample_on_manifold",
    "manifold_from_json",
]


class ManifoldDesc:
    """Common interface of manifold descriptors."""

    @property
    def ambient_dim(self) -> int:
        raise NotImplementedError

    @property
    def manifold_dim(self) -> int:
        raise NotImplementedError

    @property
    def codim(self) -> int:
        return self.ambient_dim - self.manifold_dim

    def contains(self, x, tol: float) -> bool:
        raise NotImplementedError

    def projectors(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """Tangent and normal projectors ``(P_T, P_N)`` at a point of M."""
        raise NotImplementedError

    def to_json_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class FixedSupport(ManifoldDesc):
    """``{x : supp(x) <= support}`` inside R^n (a coordinate subspace)."""

    support: frozenset
    n: int

    def __post_init__(self):
        support = frozenset(int(i) for i in self.support)
        if support and (min(support) < 0 or max(support) >= self.n):
            raise InvalidSetError("support indices out of range")
        object.__setattr__(self, "support", support)

    @property
    def ambient_dim(self) -> int:
        return self.n

    @property
    def manifold_dim(self) -> int:
        return len(self.support)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[list(self.support)] = True
        return m

    def contains(self, x, tol: float) -> bool:
        x = _as_vector(x, self.n)
        off = ~self.mask()
        return bool(np.max(np.abs(x[off]), initial=0.0) <= tol)

    def projectors(self, x=None) -> Tuple[np.ndarray, np.ndarray]:
        pt = np.diag(self.mask().astype(float))
        return pt, np.eye(self.n) - pt

    def to_json_dict(self) -> dict:
        return {"variant": "fixed_support", "support": sorted(self.support), "n": self.n}


@dataclass(frozen=True)
class FixedRank(ManifoldDesc):
    """``{X in R^{p x q} : rank(X) = r}``, points flattened row-major."""

    r: int
    p: int
    q: int

    def __post_init__(self):
        if not 0 <= self.r <= min(self.p, self.q):
            raise InvalidSetError("rank must satisfy 0 <= r <= min(p, q)")

    @property
    def ambient_dim(self) -> int:
        return self.p * self.q

    @property
    def manifold_dim(self) -> int:
        return self.r * (self.p + self.q - self.r)

    def _as_matrix(self, x) -> np.ndarray:
        return _as_vector(x, self.ambient_dim).reshape(self.p, self.q)

    def contains(self, x, tol: float) -> bool:
        sig = np.linalg.svd(self._as_matrix(x), compute_uv=False)
        return int(np.sum(sig > tol)) == self.r

    def projectors(self, x) -> Tuple[np.ndarray, np.ndarray]:
        m = self._as_matrix(x)
        u, sig, vt = np.linalg.svd(m)
        if self.r > 0 and (sig.size < self.r or sig[self.r - 1] <= 0):
            raise NotOnManifoldError("point does not have the required rank")
        ur = u[:, : self.r]
        vr = vt[: self.r].T
        pu = ur @ ur.T
        pv = vr @ vr.T
        iq = np.eye(self.q)
        ip = np.eye(self.p)
        # Tangent map Z -> Pu Z + Z Pv - Pu Z Pv on row-major vec(Z).
        pt = np.kron(pu, iq) + np.kron(ip, pv) - np.kron(pu, pv)
        return pt, np.eye(self.ambient_dim) - pt

    def to_json_dict(self) -> dict:
        return {"variant": "fixed_rank", "r": self.r, "p": self.p, "q": self.q}


@dataclass(frozen=True)
class AffineSubspace(ManifoldDesc):
    """``base + range(basis)`` with column-orthonormal basis."""

    base: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        base = _as_vector(self.base)
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2 or basis.shape[0] != base.size:
            raise InvalidSetError("basis must be (ambient, k)")
        _check_orthonormal(basis, "basis")
        object.__setattr__(self, "base", _freeze(base))
        object.__setattr__(self, "basis", _freeze(basis))

    @property
    def ambient_dim(self) -> int:
        return self.base.size

    @property
    def manifold_dim(self) -> int:
        return self.basis.shape[1]

    def contains(self, x, tol: float) -> bool:
        x = _as_vector(x, self.ambient_dim)
        d = x - self.base
        resid = d - self.basis @ (self.basis.T @ d)
        return bool(np.linalg.norm(resid) <= tol)

    def projectors(self, x=None) -> Tuple[np.ndarray, np.ndarray]:
        pt = self.basis @ self.basis.T
        return pt, np.eye(self.ambient_dim) - pt

    def to_json_dict(self) -> dict:
        return {"variant": "affine", "base": self.base.tolist(), "basis": self.basis.tolist()}


@dataclass(frozen=True)
class ProductManifold(ManifoldDesc):
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise InvalidSetError("product manifold needs at least one part")

    @property
    def ambient_dim(self) -> int:
        return sum(p.ambient_dim for p in self.parts)

    @property
    def manifold_dim(self) -> int:
        return sum(p.manifold_dim for p in self.parts)

    def _slices(self):
        off = 0
        for p in self.parts:
            yield p, slice(off, off + p.ambient_dim)
            off += p.ambient_dim

    def contains(self, x, tol: float) -> bool:
        x = _as_vector(x, self.ambient_dim)
        return all(p.contains(x[s], tol) for p, s in self._slices())

    def projectors(self, x) -> Tuple[np.ndarray, np.ndarray]:
        x = _as_vector(x, self.ambient_dim)
        n = self.ambient_dim
        pt = np.zeros((n, n))
        for p, s in self._slices():
            pt[s, s] = p.projectors(x[s])[0]
        return pt, np.eye(n) - pt

    def to_json_dict(self) -> dict:
        return {"variant": "product", "parts": [p.to_json_dict() for p in self.parts]}


def enlarge_manifold(m: ManifoldDesc, a_at_xbar: StructuredSet, ubar,
                     margin: float) -> ManifoldDesc:
    """Minimal enlargement of ``m`` making ``ubar`` interior to the value set.

    A boundary dual vector blocks identification of ``m``; the enlarged
    manifold frees exactly the directions along which ``ubar`` attains a
    face of ``a_at_xbar`` within ``margin``.  Returns ``m`` unchanged when
    ``ubar`` already sits in the relative interior at that margin.  The
    operation is idempotent and never shrinks ``m``.
    """
    ubar = _as_vector(ubar, a_at_xbar.dim)
    member_tol = 1e-9 * (1.0 + np.max(np.abs(ubar), initial=0.0))
    if not a_at_xbar.contains(ubar, member_tol):
        raise InvalidSetError("ubar is not a member of the value set")
    if a_at_xbar.in_relative_interior(ubar, margin):
        return m
    if isinstance(m, FixedSupport) and isinstance(a_at_xbar, BoxProduct):
        free = a_at_xbar.free_mask()
        slack = np.full(m.n, np.inf)
        slack[free] = _interval_slack(a_at_xbar.lo[free], a_at_xbar.hi[free],
                                      ubar[free])
        degenerate = {int(j) for j in np.flatnonzero(slack < margin)
                      if j not in m.support}
        return FixedSupport(m.support | degenerate, m.n)
    if isinstance(m, FixedRank) and isinstance(a_at_xbar, SpectralSet):
        dw, _ = a_at_xbar._split(ubar.reshape(a_at_xbar.shape))
        sig = np.linalg.svd(dw, compute_uv=False) if dw.size else np.zeros(0)
        n_deg = int(np.sum(sig >= a_at_xbar.radius - margin))
        new_rank = max(m.r, a_at_xbar.rank + n_deg)
        return FixedRank(min(new_rank, min(m.p, m.q)), m.p, m.q)
    raise NoClosedFormError(
        "enlargement is implemented for FixedSupport/box and FixedRank/spectral pairs")


def sample_on_manifold(m: ManifoldDesc, xbar, radius: float, n: int,
                       rng: np.random.Generator) -> list:
    """Draw n points of M within sup-norm distance ``radius`` of ``xbar``."""
    xbar = _as_vector(xbar, m.ambient_dim)
    out = []
    for _ in range(n):
        out.append(_sample_one(m, xbar, radius, rng))
    return out


def _sample_one(m: ManifoldDesc, xbar: np.ndarray, radius: float,
                rng: np.random.Generator) -> np.ndarray:
    if isinstance(m, FixedSupport):
        x = xbar.copy()
        mask = m.mask()
        x[mask] += rng.uniform(-radius, radius, int(mask.sum()))
        return x
    if isinstance(m, AffineSubspace):
        t = rng.uniform(-radius, radius, m.manifold_dim)
        step = m.basis @ t
        scale = np.max(np.abs(step), initial=0.0)
        if scale > radius:
            step *= 0.99 * radius / scale
        return xbar + step
    if isinstance(m, FixedRank):
        mat = xbar.reshape(m.p, m.q)
        u, sig, vt = np.linalg.svd(mat)
        ur, sr, vr = u[:, : m.r], sig[: m.r], vt[: m.r].T
        eta = 0.2 * radius / (1.0 + np.max(sr, initial=1.0))
        for _ in range(60):
            uq, _ = np.linalg.qr(ur + eta * rng.standard_normal(ur.shape))
            vq, _ = np.linalg.qr(vr + eta * rng.standard_normal(vr.shape))
            s_new = sr * (1.0 + eta * rng.uniform(-1.0, 1.0, m.r))
            cand = uq @ np.diag(s_new) @ vq.T
            if np.max(np.abs(cand - mat)) <= radius:
                return cand.ravel()
            eta *= 0.5
        raise NotOnManifoldError("failed to sample a nearby fixed-rank point")
    if isinstance(m, ProductManifold):
        parts = []
        for p, s in m._slices():
            parts.append(_sample_one(p, xbar[s], radius, rng))
        return np.concatenate(parts)
    raise NoClosedFormError(f"sampling not implemented for {type(m).__name__}")


def manifold_from_json(data: dict) -> ManifoldDesc:
    variant = data.get("variant")
    if variant == "fixed_support":
        return FixedSupport(frozenset(data["support"]), int(data["n"]))
    if variant == "fixed_rank":
        return FixedRank(int(data["r"]), int(data["p"]), int(data["q"]))
    if variant == "affine":
        return AffineSubspace(np.array(data["base"], dtype=float),
                              np.array(data["basis"], dtype=float))
    if variant == "product":
        return ProductManifold(tuple(manifold_from_json(d) for d in data["parts"]))
    raise InvalidSetError(f"unknown manifold variant {variant!r}")

"""Local-union geometry: identification radius and union membership.

The local union of an operator ``A`` around a graph point ``(xbar, ubar)``
on a manifold ``M`` is

    U = union over x in M within eps of xbar  of  (x + gamma * A_eps(x)),

where ``A_eps`` is the graph localization.  Its interior around
``zbar = xbar + gamma * ubar`` governs identification: once the combined
primal-dual error drops below the distance ``d`` from ``zbar`` to the
boundary of ``U``, iterates land on ``M``.

Conventions (the underlying theory fixes no metric):

* the manifold ball and the dual localization both use the sup norm for
  the separable operator families, which makes ``U`` an exact coordinate
  box (operator/Frobenius norms play this role for the nuclear family);
* a single ``eps`` is shared by the primal ball and the dual localization.

``identification_radius`` returns the exact boundary distance for the
separable box families.  For the nuclear family it returns a certified
inner bound computed from the spectral slack, under the convention that an
enlarged fixed-rank manifold is read as its closure (rank at most r); see
the function docstring.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm as _gauss
from scipy.stats import qmc

from .errors import InvalidSetError, NoClosedFormError
from .manifolds import AffineSubspace, FixedRank, FixedSupport, ManifoldDesc
from .operators import (
    NormalConeBox,
    PartlySmoothOperator,
    Perturbed,
    SmoothMap,
    SubdiffL0,
    SubdiffL1,
    SubdiffNuclear,
    SumOp,
    hard_threshold,
    soft_threshold,
)
from .sets import BoxProduct, _as_vector

__all__ = [
    "LocalUnionSpec",
    "identification_radius",
    "brute_force_radius",
    "union_membership",
    "interior_inclusion_check",
]

_MEMBER_TOL = 1e-9


def _affine_split(op: PartlySmoothOperator):
    """Split ``op`` into (nonsmooth base, scalar h, offset c) when the
    smooth part is scalar-affine; (op, 0, 0) for concrete operators."""
    if isinstance(op, Perturbed):
        aff = op.smooth.scalar_affine()
        if aff is None:
            return None
        base, (h, c) = op.base, aff
        inner = _affine_split(base)
        if inner is None:
            return None
        b2, h2, c2 = inner
        return b2, h + h2, c + c2
    if isinstance(op, SumOp):
        other, smooth = op._split_smooth()
        if len(other) == 1 and len(smooth) <= 1:
            h, c = 0.0, np.zeros(op.dim)
            if smooth:
                aff = smooth[0].scalar_affine()
                if aff is None:
                    return None
                h, c = aff
            inner = _affine_split(other[0])
            if inner is None:
                return None
            b2, h2, c2 = inner
            return b2, h + h2, c + c2
        return None
    if isinstance(op, (SubdiffL1, SubdiffL0, SubdiffNuclear, NormalConeBox)):
        return op, 0.0, np.zeros(op.dim)
    return None


def _is_spectral(op: PartlySmoothOperator) -> bool:
    split = _affine_split(op)
    return split is not None and isinstance(split[0], SubdiffNuclear)


def _primal_distance(op: PartlySmoothOperator, a: np.ndarray, b: np.ndarray) -> float:
    if _is_spectral(op):
        return float(np.linalg.norm(a - b))
    return float(np.max(np.abs(a - b), initial=0.0))


def _dual_distance(op: PartlySmoothOperator, a: np.ndarray, b: np.ndarray) -> float:
    split = _affine_split(op)
    if split is not None and isinstance(split[0], SubdiffNuclear):
        base = split[0]
        return float(np.linalg.norm((a - b).reshape(base.p, base.q), 2))
    return float(np.max(np.abs(a - b), initial=0.0))


def _in_closure(m: ManifoldDesc, x: np.ndarray, tol: float) -> bool:
    # Enlarged fixed-rank manifolds are anchored at a lower-rank point;
    # the union geometry reads them as the closure (rank at most r).
    if isinstance(m, FixedRank):
        sig = np.linalg.svd(x.reshape(m.p, m.q), compute_uv=False)
        return int(np.sum(sig > tol)) <= m.r
    return False


@dataclass(frozen=True)
class LocalUnionSpec:
    """Operator, manifold, anchor pair and the (gamma, eps) parameters."""

    operator: PartlySmoothOperator
    manifold: ManifoldDesc
    xbar: np.ndarray
    ubar: np.ndarray
    gamma: float
    eps: float

    def __post_init__(self):
        xbar = _as_vector(self.xbar, self.operator.dim)
        ubar = _as_vector(self.ubar, self.operator.dim)
        object.__setattr__(self, "xbar", xbar)
        object.__setattr__(self, "ubar", ubar)
        if self.gamma <= 0 or self.eps <= 0:
            raise InvalidSetError("gamma and eps must be positive")
        tol = _MEMBER_TOL * (1.0 + np.max(np.abs(ubar), initial=0.0))
        if not self.operator.eval(xbar).contains(ubar, tol):
            raise InvalidSetError("ubar is not a dual vector at xbar")
        xtol = _MEMBER_TOL * (1.0 + np.max(np.abs(xbar), initial=0.0))
        if not (self.manifold.contains(xbar, xtol)
                or _in_closure(self.manifold, xbar, xtol)):
            raise InvalidSetError("xbar does not lie on the manifold")
        self._check_hard_threshold_window()

    def _check_hard_threshold_window(self) -> None:
        # The hard-threshold resolvent inverts the localization only when
        # the threshold separates surviving entries from localized noise:
        # gamma*(|u_j| + eps) <= sqrt(2 gamma mu) < min_active |x_i| - eps.
        split = _affine_split(self.operator)
        if split is None or not isinstance(split[0], SubdiffL0):
            return
        base, h, c = split
        if h != 0.0 or np.any(c != 0.0):
            raise NoClosedFormError("perturbed l0 localizations are not supported")
        thresh = np.sqrt(2.0 * self.gamma * base.mu)
        active = np.abs(self.xbar) > 0
        u_off = np.abs(self.ubar[~active]) if np.any(~active) else np.zeros(1)
        lo_side = self.gamma * (np.max(u_off, initial=0.0) + self.eps)
        hi_side = np.min(np.abs(self.xbar[active]), initial=np.inf) - self.eps
        if not (lo_side <= thresh < hi_side):
            raise InvalidSetError(
                "l0 localization window violated: need "
                f"gamma*(|u|+eps)={lo_side:.4g} <= sqrt(2*gamma*mu)={thresh:.4g}"
                f" < min|x_i|-eps={hi_side:.4g}")

    def zbar(self) -> np.ndarray:
        return self.xbar + self.gamma * self.ubar


def _tangent_coords(m: ManifoldDesc, dim: int) -> np.ndarray:
    if isinstance(m, FixedSupport):
        mask = np.zeros(dim, dtype=bool)
        mask[list(m.support)] = True
        return mask
    if isinstance(m, AffineSubspace):
        mask = np.zeros(dim, dtype=bool)
        for j in range(m.basis.shape[1]):
            col = m.basis[:, j]
            big = np.flatnonzero(np.abs(col) > 1e-12)
            if big.size != 1 or abs(abs(col[big[0]]) - 1.0) > 1e-12:
                raise NoClosedFormError(
                    "analytic radius needs a coordinate-aligned manifold")
            mask[big[0]] = True
        return mask
    raise NoClosedFormError("analytic radius needs a coordinate-aligned manifold")


def identification_radius(spec: LocalUnionSpec, norm: str = "linf") -> float:
    """Distance from ``zbar`` to the boundary of the local union.

    Exact for the separable families (l1 / l0 / box normal cones, plus a
    scalar-affine smooth perturbation), where the union is a coordinate
    box and the boundary distance is the smallest face slack in either
    norm.  Returns 0 when ``ubar`` attains a face of the value set, the
    degenerate case in which identification of the minimal manifold fails.

    An enlarged fixed-support manifold (support strictly containing the
    support of ``xbar``) is handled through the one-dimensional unions
    swept by the freed coordinates.  For the nuclear family the returned
    value is a certified inner bound, min(eps, gamma*eps/2, spectral face
    slack), with an enlarged fixed-rank manifold read as its closure.
    Unsupported operators raise and direct the caller to
    :func:`brute_force_radius`.
    """
    if norm not in ("l2", "linf"):
        raise ValueError(f"unknown norm {norm!r}")
    split = _affine_split(spec.operator)
    if split is None:
        raise NoClosedFormError(
            "no analytic radius for this operator; use brute_force_radius")
    base, h, c = split
    if isinstance(base, SubdiffNuclear):
        return _spectral_radius(spec, base, h, c)
    if not isinstance(base, (SubdiffL1, SubdiffL0, NormalConeBox)):
        raise NoClosedFormError(
            "no analytic radius for this operator; use brute_force_radius")
    return _box_radius(spec, base, h, c)


def _box_radius(spec: LocalUnionSpec, base, h: float, c: np.ndarray) -> float:
    n = spec.operator.dim
    gamma, eps = spec.gamma, spec.eps
    tangent = _tangent_coords(spec.manifold, n)
    if 1.0 + gamma * h <= 0:
        raise NoClosedFormError("1 + gamma*h must be positive")
    box = base.eval(spec.xbar)
    sm = h * spec.xbar + c
    u_ns = spec.ubar - sm
    pinned = ~box.free_mask()
    eff = eps if h == 0.0 else min(eps, eps / abs(h))

    slacks = [np.inf]
    for i in range(n):
        if tangent[i]:
            if pinned[i]:
                # Sign/face-stable tangent coordinate; the primal ball must
                # not reach a kink of the base operator.
                margin = _kink_margin(base, spec.xbar, i)
                if eps >= margin:
                    raise InvalidSetError(
                        f"eps={eps:.4g} reaches a kink along coordinate {i} "
                        f"(margin {margin:.4g}); shrink eps")
                slacks.append((1.0 + gamma * h) * eff)
            else:
                # Freed (enlarged) coordinate: the swept one-dimensional
                # union is an interval when the localization window reaches
                # the face.
                if not isinstance(base, SubdiffL1):
                    raise NoClosedFormError(
                        "enlarged coordinates are supported for the l1 family only")
                gap = base.mu - abs(u_ns[i])
                if gap > eps:
                    raise NoClosedFormError(
                        "freed coordinate is interior by more than eps; the "
                        "swept union is disconnected")
                if h == 0.0:
                    reach = eps
                else:
                    reach = min(eps, max(0.0, eps - gap) / abs(h))
                slacks.append((1.0 + gamma * h) * reach + gamma * gap)
        else:
            lo_full = box.lo[i] + sm[i]
            hi_full = box.hi[i] + sm[i]
            down = spec.ubar[i] - lo_full if np.isfinite(lo_full) else np.inf
            up = hi_full - spec.ubar[i] if np.isfinite(hi_full) else np.inf
            slacks.append(gamma * max(0.0, min(eps, down, up)))
    return float(max(0.0, min(slacks)))


def _kink_margin(base, xbar: np.ndarray, i: int) -> float:
    if isinstance(base, (SubdiffL1, SubdiffL0)):
        return abs(xbar[i])
    if isinstance(base, NormalConeBox):
        down = xbar[i] - base.lo[i] if np.isfinite(base.lo[i]) else np.inf
        up = base.hi[i] - xbar[i] if np.isfinite(base.hi[i]) else np.inf
        return min(down, up)
    return np.inf


def _spectral_radius(spec: LocalUnionSpec, base: SubdiffNuclear, h: float,
                     c: np.ndarray) -> float:
    if h != 0.0 or np.any(c != 0.0):
        raise NoClosedFormError("perturbed nuclear radii are not supported")
    if not isinstance(spec.manifold, FixedRank):
        raise NoClosedFormError("nuclear radius needs a fixed-rank manifold")
    x_mat = spec.xbar.reshape(base.p, base.q)
    u, sig, vt = np.linalg.svd(x_mat)
    from .operators import detect_rank

    r_x = detect_rank(sig)
    r_hat = spec.manifold.r
    if r_hat < r_x:
        raise InvalidSetError("manifold rank is below the rank of xbar")
    w0 = spec.ubar.reshape(base.p, base.q) - base.mu * (u[:, :r_x] @ vt[:r_x])
    sig_w = np.linalg.svd(w0, compute_uv=False)
    n_enl = r_hat - r_x
    sig_rem = sig_w[n_enl] if n_enl < sig_w.size else 0.0
    parts = [spec.eps, spec.gamma * spec.eps / 2.0,
             spec.gamma * (base.mu - sig_rem)]
    if r_hat == r_x and r_x > 0:
        parts.append(float(sig[r_x - 1]))
    return float(max(0.0, min(parts)))


def union_membership(spec: LocalUnionSpec, z, tol: float = _MEMBER_TOL
                     ) -> Optional[np.ndarray]:
    """Resolve ``z`` through the localized operator; return the witness.

    Computes ``x = (Id + gamma A)^{-1}(z)`` and returns it when ``x`` lies
    on the manifold within ``tol``, inside the primal ball, and the
    recovered dual ``(z - x)/gamma`` is a localized dual vector of ``x``.
    Returns ``None`` otherwise, which certifies ``z`` outside the union.
    """
    z = _as_vector(z, spec.operator.dim)
    x = spec.operator.resolvent(z, spec.gamma)
    if not spec.manifold.contains(x, tol):
        return None
    if _primal_distance(spec.operator, x, spec.xbar) > spec.eps:
        return None
    u = (z - x) / spec.gamma
    if not spec.operator.eval(x).contains(u, tol):
        return None
    if _dual_distance(spec.operator, u, spec.ubar) > spec.eps:
        return None
    return x


def _directions(dim: int, n_dirs: int, norm: str, seed: int = 7) -> np.ndarray:
    """Deterministic direction set: signed axes plus low-discrepancy points."""
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    n_extra = max(0, n_dirs - axes.shape[0])
    if n_extra:
        sob = qmc.Sobol(d=dim, scramble=True, seed=seed)
        draw = 1 << int(np.ceil(np.log2(n_extra)))
        pts = _gauss.ppf(np.clip(sob.random(draw)[:n_extra], 1e-12, 1 - 1e-12))
        dirs = np.vstack([axes, pts])
    else:
        dirs = axes
    if norm == "linf":
        scale = np.max(np.abs(dirs), axis=1)
    else:
        scale = np.linalg.norm(dirs, axis=1)
    keep = scale > 1e-12
    return dirs[keep] / scale[keep, None]


def _march_cap(spec: LocalUnionSpec) -> float:
    split = _affine_split(spec.operator)
    h = abs(split[1]) if split is not None else 1.0
    mu = getattr(split[0], "mu", 1.0) if split is not None else 1.0
    reach = np.max(np.abs(spec.ubar), initial=0.0)
    return 2.0 * (1.0 + spec.gamma * (1.0 + h)) * spec.eps \
        + 2.0 * spec.gamma * (mu + reach) + 1.0


def brute_force_radius(spec: LocalUnionSpec, norm: str = "linf",
                       n_dirs: int = 500, step: float = 1e-3,
                       tol: float = _MEMBER_TOL) -> float:
    """Boundary distance by marching rays until union membership fails.

    Marches from ``zbar`` in ``n_dirs`` unit directions (the signed axes
    are always included, so box faces are hit perpendicularly) in
    increments of ``step`` and records the last radius inside the union.
    For box unions the result is within ``step`` below the true distance.
    """
    if spec.operator.dim > 6:
        raise InvalidSetError("brute-force radius is limited to dimension <= 6")
    if norm not in ("l2", "linf"):
        raise ValueError(f"unknown norm {norm!r}")
    zbar = spec.zbar()
    if union_membership(spec, zbar, tol) is None:
        return 0.0
    dirs = _directions(spec.operator.dim, n_dirs, norm)
    cap = _march_cap(spec)
    radii = np.arange(1, int(np.ceil(cap / step)) + 1) * step
    best = np.inf
    for v in dirs:
        pts = zbar[None, :] + radii[:, None] * v[None, :]
        inside = _membership_batch(spec, pts, tol)
        failures = np.flatnonzero(~inside)
        if failures.size == 0:
            raise InvalidSetError("march cap never left the union; enlarge cap")
        exit_r = max(0.0, radii[failures[0]] - step)
        best = min(best, exit_r)
        if best == 0.0:
            break
    return float(best)


def _membership_batch(spec: LocalUnionSpec, pts: np.ndarray,
                      tol: float) -> np.ndarray:
    fast = _batch_box_membership(spec, pts, tol)
    if fast is not None:
        return fast
    return np.array([union_membership(spec, p, tol) is not None for p in pts])


def _batch_box_membership(spec: LocalUnionSpec, pts: np.ndarray,
                          tol: float) -> Optional[np.ndarray]:
    split = _affine_split(spec.operator)
    if split is None:
        return None
    base, h, c = split
    gamma = spec.gamma
    scale = 1.0 + gamma * h
    if scale <= 0:
        return None
    g_eff = gamma / scale
    zz = (pts - gamma * c[None, :]) / scale
    if isinstance(base, SubdiffL1):
        x = soft_threshold(zz, g_eff * base.mu)
    elif isinstance(base, SubdiffL0):
        x = hard_threshold(zz, np.sqrt(2.0 * g_eff * base.mu))
    elif isinstance(base, NormalConeBox):
        x = np.clip(zz, base.lo[None, :], base.hi[None, :])
    else:
        return None
    # The recovered dual (z - x)/gamma is a dual vector of x by resolvent
    # optimality; only the manifold and ball conditions can fail.
    ok = _batch_on_manifold(spec.manifold, x, tol)
    ok &= np.max(np.abs(x - spec.xbar[None, :]), axis=1) <= spec.eps
    u = (pts - x) / gamma
    ok &= np.max(np.abs(u - spec.ubar[None, :]), axis=1) <= spec.eps
    return ok


def _batch_on_manifold(m: ManifoldDesc, x: np.ndarray, tol: float
                       ) -> Optional[np.ndarray]:
    if isinstance(m, FixedSupport):
        mask = ~m.mask()
        if not mask.any():
            return np.ones(x.shape[0], dtype=bool)
        return np.max(np.abs(x[:, mask]), axis=1) <= tol
    if isinstance(m, AffineSubspace):
        d = x - m.base[None, :]
        resid = d - (d @ m.basis) @ m.basis.T
        return np.linalg.norm(resid, axis=1) <= tol
    return np.array([m.contains(row, tol) for row in x])


def interior_inclusion_check(spec: LocalUnionSpec, margin: float,
                             n_dirs: int = 64, tol: float = _MEMBER_TOL) -> bool:
    """Whether the ball of radius ``margin`` around ``zbar`` stays in the union."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    zbar = spec.zbar()
    for v in _directions(spec.operator.dim, n_dirs, "linf"):
        if union_membership(spec, zbar + margin * v, tol) is None:
            return False
    return True

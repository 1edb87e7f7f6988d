"""Calculus-rule checks: sums, products, precomposition, monotonicity.

Builds the saddle-point block operator (separable subdifferentials plus a
skew coupling) and the KKT operator of a linearly constrained problem from
the combinators, then verifies on seeded samples: monotonicity of graph
pairs, value-set regularity, the normal-space dimension identity for sums
of fixed-support manifolds under the transversality gate, and the kernel
condition guarding affine precomposition.
"""

from __future__ import annotations

import numpy as np

from ..manifolds import FixedSupport
from ..operators import LinearPrecompose, Perturbed, ProductOp, SmoothMap, SubdiffL1
from ..sets import span_dimension
from .common import ExperimentResult, ensure_out_dir, write_json, write_manifest

MONOTONE_SLACK = -1e-12


def saddle_point_operator(k_mat: np.ndarray) -> Perturbed:
    """Block operator [[df, K^T], [-K, dg*]] as separable + skew parts."""
    m, n = k_mat.shape
    skew = np.zeros((n + m, n + m))
    skew[:n, n:] = k_mat.T
    skew[n:, :n] = -k_mat
    return Perturbed(ProductOp((SubdiffL1(1.0, n), SubdiffL1(1.0, m))),
                     SmoothMap.affine(skew, np.zeros(n + m)))


def kkt_operator(c_mat: np.ndarray, d_mat: np.ndarray, e_vec: np.ndarray
                 ) -> Perturbed:
    """KKT operator of min f(x) + g(y) s.t. Cx + Dy = e with l1 blocks."""
    ell, n = c_mat.shape
    m = d_mat.shape[1]
    total = n + m + ell
    lin = np.zeros((total, total))
    lin[:n, n + m:] = -c_mat.T
    lin[n:n + m, n + m:] = -d_mat.T
    lin[n + m:, :n] = c_mat
    lin[n + m:, n:n + m] = d_mat
    offset = np.concatenate([np.zeros(n + m), -e_vec])
    return Perturbed(
        ProductOp((SubdiffL1(1.0, n), SubdiffL1(1.0, m), SmoothMap.zero(ell))),
        SmoothMap.affine(lin, offset))


def _sample_graph_pairs(op: Perturbed, n_pairs: int, rng: np.random.Generator):
    """Vectorized graph sampling for separable-plus-affine operators.

    Points get a random zero pattern so the set-valued faces are
    exercised; duals take pinned signs on the support and uniform values
    in the unit interval elsewhere, plus the affine part.
    """
    dim = op.dim
    z = rng.standard_normal((2 * n_pairs, dim))
    z[rng.random(z.shape) < 0.3] = 0.0
    u_ns = np.where(z != 0.0, np.sign(z), rng.uniform(-1.0, 1.0, z.shape))
    smooth_zero = _zero_block_mask(op)
    u_ns[:, smooth_zero] = 0.0
    lin = np.asarray(op.smooth.linear_part, dtype=float)
    u = u_ns + z @ lin.T + np.asarray(op.smooth.offset)[None, :]
    return z, u


def _zero_block_mask(op: Perturbed) -> np.ndarray:
    mask = np.zeros(op.dim, dtype=bool)
    off = 0
    for part in op.base.parts:
        if isinstance(part, SmoothMap):
            mask[off:off + part.dim] = True
        off += part.dim
    return mask


def monotonicity_violations(op: Perturbed, n_pairs: int, seed: int) -> int:
    rng = np.random.Generator(np.random.Philox(key=seed))
    z, u = _sample_graph_pairs(op, n_pairs, rng)
    dz = z[0::2] - z[1::2]
    du = u[0::2] - u[1::2]
    inner = np.sum(dz * du, axis=1)
    return int(np.sum(inner < MONOTONE_SLACK))


def support_pair_check(n: int, n_pairs: int, seed: int):
    """Transversality gating and the codimension identity on support pairs.

    Two fixed-support subspaces are transversal exactly when their
    supports cover every coordinate; then the codimension of the
    intersection manifold equals the sum of the codimensions.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    stats = {"transversal": 0, "expected_failure": 0, "identity_violations": 0}
    for _ in range(n_pairs):
        s1 = frozenset(rng.choice(n, size=int(rng.integers(3, n)), replace=False)
                       .tolist())
        s2 = frozenset(rng.choice(n, size=int(rng.integers(3, n)), replace=False)
                       .tolist())
        m1, m2 = FixedSupport(s1, n), FixedSupport(s2, n)
        transversal = (s1 | s2) == frozenset(range(n))
        identity = FixedSupport(s1 & s2, n).codim == m1.codim + m2.codim
        if transversal:
            stats["transversal"] += 1
            if not identity:
                stats["identity_violations"] += 1
        else:
            stats["expected_failure"] += 1
            if identity:
                stats["identity_violations"] += 1
    return stats


def precompose_check(seed: int):
    """Span identity for G^T A(Gz + h) and the kernel transversality gate."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    n, d = 5, 7
    q, _ = np.linalg.qr(rng.standard_normal((d, n)))
    g = q.T  # (n, d) with orthonormal rows: full rank, trivial kernel
    h = rng.standard_normal(n)
    inner = SubdiffL1(1.0, n)
    op = LinearPrecompose(inner, g, h)
    z = rng.standard_normal(d)
    phi_z = g @ z + h
    phi_z[rng.choice(n, 2, replace=False)] = 0.0
    z = np.linalg.lstsq(g, phi_z - h, rcond=None)[0]
    ok_transversal = op.transversal_at(z)
    value = op.eval(z)
    free = int(np.sum(np.abs(g @ z + h) <= 1e-9))
    span_ok = span_dimension([(np.zeros(d), value)]) == free

    # Constructed violation: kill one coordinate of the map entirely, so
    # it stays off the support and ker(G^T) contains its direction.
    off_support = int(np.flatnonzero(np.abs(g @ z + h) <= 1e-9)[0])
    g_bad = g.copy()
    g_bad[off_support] = 0.0
    h_bad = h.copy()
    h_bad[off_support] = 0.0
    bad = LinearPrecompose(inner, g_bad, h_bad)
    violation_detected = not bad.transversal_at(z)
    return {"transversal_ok": bool(ok_transversal), "span_ok": bool(span_ok),
            "violation_detected": bool(violation_detected),
            "free_directions": free}


def regularity_check(op: Perturbed, n_points: int, seed: int) -> bool:
    rng = np.random.Generator(np.random.Philox(key=seed))
    for _ in range(n_points):
        z = rng.standard_normal(op.dim)
        z[rng.random(op.dim) < 0.3] = 0.0
        value = op.eval(z)
        if not value.contains(value.center(), 1e-9):
            return False
    return True


def cmd_calculus_check(config: dict, emit_svg: bool = False) -> ExperimentResult:
    out = ensure_out_dir(config, "results/calculus_check")
    seed = config.get("seed", 0)
    rng = np.random.Generator(np.random.Philox(key=seed))

    k_mat = rng.standard_normal((4, 6))
    saddle = saddle_point_operator(k_mat)
    c_mat = rng.standard_normal((2, 4))
    d_mat = rng.standard_normal((2, 3))
    e_vec = rng.standard_normal(2)
    kkt = kkt_operator(c_mat, d_mat, e_vec)

    failures = []
    saddle_bad = monotonicity_violations(saddle, 10_000, seed + 1)
    kkt_bad = monotonicity_violations(kkt, 10_000, seed + 2)
    if saddle_bad:
        failures.append(f"saddle operator: {saddle_bad} monotonicity violations")
    if kkt_bad:
        failures.append(f"kkt operator: {kkt_bad} monotonicity violations")
    if not regularity_check(saddle, 50, seed + 3):
        failures.append("saddle operator produced an invalid value set")
    if not regularity_check(kkt, 50, seed + 4):
        failures.append("kkt operator produced an invalid value set")

    pair_stats = support_pair_check(10, 100, seed + 5)
    if pair_stats["identity_violations"]:
        failures.append("codimension identity mismatched the transversality gate")

    pre = precompose_check(seed + 6)
    if not (pre["transversal_ok"] and pre["span_ok"]
            and pre["violation_detected"]):
        failures.append(f"precomposition checks failed: {pre}")

    summary = {
        "monotonicity_pairs": 10_000,
        "saddle_violations": saddle_bad,
        "kkt_violations": kkt_bad,
        "support_pairs": pair_stats,
        "precompose": pre,
    }
    write_manifest(out, "calculus-check", config,
                   {"monotone_slack": MONOTONE_SLACK})
    write_json(out / "summary.json", summary)
    return ExperimentResult("calculus-check", not failures, summary,
                            [str(out / "summary.json")], failures)

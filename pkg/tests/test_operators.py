"""Tests for the concrete operators, combinators and localization."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pssso import (
    AffineSubspace,
    BoxProduct,
    EmptyDomainError,
    FixedSupport,
    InvalidSetError,
    LinearPrecompose,
    NoClosedFormError,
    NormalConeBox,
    Perturbed,
    ProductManifold,
    ProductOp,
    Singleton,
    SmoothMap,
    SubdiffL0,
    SubdiffL1,
    SubdiffNuclear,
    SumOp,
    check_continuity_along_manifold,
    localize,
    span_dimension,
)


def random_orthonormal(n, k, rng):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q[:, :k]


class TestEval:
    def test_l1_at_sparse_point(self):
        s = SubdiffL1(1.0, 3).eval([2.0, 0.0, 0.0])
        assert np.allclose(s.lo, [1.0, -1.0, -1.0])
        assert np.allclose(s.hi, [1.0, 1.0, 1.0])

    def test_l0_span_form(self):
        s = SubdiffL0(1.0, 2).eval([1.0, 0.0])
        assert s.lo[0] == s.hi[0] == 0.0
        assert np.isneginf(s.lo[1]) and np.isposinf(s.hi[1])

    def test_smooth_root(self):
        c = np.array([0.4, -1.0])
        sm = SmoothMap.affine(1.0, -c)
        out = sm.eval(c)
        assert isinstance(out, Singleton)
        assert np.allclose(out.point, 0.0)

    def test_normal_cone_faces(self):
        op = NormalConeBox([-1.0, -1.0], [1.0, 1.0])
        s = op.eval([1.0, 0.0])
        assert s.lo[0] == 0.0 and np.isposinf(s.hi[0])
        assert s.lo[1] == s.hi[1] == 0.0
        with pytest.raises(EmptyDomainError):
            op.eval([2.0, 0.0])

    def test_sum_minkowski_box_plus_box(self):
        op = SumOp((SubdiffL1(1.0, 2), SubdiffL1(0.5, 2)))
        s = op.eval([1.0, 0.0])
        assert np.allclose(s.lo, [1.5, -1.5])
        assert np.allclose(s.hi, [1.5, 1.5])

    def test_sum_spectral_plus_singleton_rejected(self):
        op = SumOp((SubdiffNuclear(1.0, 2, 2), SmoothMap.affine(0.0, np.ones(4))))
        with pytest.raises(NoClosedFormError):
            op.eval(np.diag([1.0, 0.0]).ravel())

    def test_product_merges_boxes(self):
        op = ProductOp((SubdiffL1(1.0, 2), SmoothMap.affine(1.0, np.zeros(2))))
        s = op.eval([1.0, 0.0, 0.5, -0.5])
        assert isinstance(s, BoxProduct)
        assert np.allclose(s.lo, [1.0, -1.0, 0.5, -0.5])


class TestResolvent:
    def test_soft_threshold_solution(self):
        x = SubdiffL1(1.0, 3).resolvent([3.0, 1.0, 0.5], 1.0)
        assert np.allclose(x, [2.0, 0.0, 0.0])

    def test_svt_matches_vector_case(self):
        rng = np.random.default_rng(0)
        u = random_orthonormal(3, 3, rng)
        v = random_orthonormal(3, 3, rng)
        z = u @ np.diag([3.0, 1.0, 0.5]) @ v.T
        x = SubdiffNuclear(1.0, 3, 3).resolvent(z.ravel(), 1.0).reshape(3, 3)
        uu, sig, vv = np.linalg.svd(x)
        assert np.allclose(sig, [2.0, 0.0, 0.0], atol=1e-12)
        # same leading singular vectors up to sign
        assert abs(np.dot(uu[:, 0], u[:, 0])) == pytest.approx(1.0, abs=1e-10)

    def test_hard_threshold_per_coordinate_enumeration(self):
        # oracle: per coordinate, pick the cheaper of keeping or zeroing
        gamma, mu = 0.1, 1.0
        z = np.array([1.0, 0.1])
        expected = []
        for zi in z:
            keep_cost = gamma * mu
            zero_cost = 0.5 * zi ** 2
            expected.append(0.0 if zero_cost <= keep_cost else zi)
        out = SubdiffL0(mu, 2).resolvent(z, gamma)
        assert np.allclose(out, expected)
        assert np.allclose(out, [1.0, 0.0])

    def test_hard_threshold_tie_prefers_zero(self):
        gamma, mu = 0.125, 1.0
        z = np.sqrt(2 * gamma * mu)
        assert SubdiffL0(mu, 1).resolvent([z], gamma)[0] == 0.0

    def test_hard_threshold_full_support_enumeration(self):
        # global optimality against all 2^n support patterns, n <= 3
        rng = np.random.default_rng(5)
        op = SubdiffL0(0.7, 3)
        for _ in range(300):
            z = rng.normal(size=3) * 1.5
            gamma = float(rng.uniform(0.05, 1.0))
            best_cost, best_x = np.inf, None
            for pattern in itertools.product([0, 1], repeat=3):
                x = z * np.array(pattern)
                cost = gamma * 0.7 * np.count_nonzero(x) \
                    + 0.5 * np.sum((x - z) ** 2)
                if cost < best_cost - 1e-15:
                    best_cost, best_x = cost, x
            out = op.resolvent(z, gamma)
            cost_out = gamma * 0.7 * np.count_nonzero(out) \
                + 0.5 * np.sum((out - z) ** 2)
            assert cost_out == pytest.approx(best_cost, abs=1e-12)

    def test_svt_unitary_equivariance(self):
        rng = np.random.default_rng(6)
        op = SubdiffNuclear(0.8, 4, 4)
        for _ in range(10):
            z = rng.normal(size=(4, 4))
            q1 = random_orthonormal(4, 4, rng)
            q2 = random_orthonormal(4, 4, rng)
            lhs = op.resolvent((q1 @ z @ q2.T).ravel(), 0.6).reshape(4, 4)
            rhs = q1 @ op.resolvent(z.ravel(), 0.6).reshape(4, 4) @ q2.T
            assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_normal_cone_clamp(self):
        op = NormalConeBox([-1.0, 0.0], [1.0, 2.0])
        assert np.allclose(op.resolvent([5.0, -3.0], 0.3), [1.0, 0.0])

    def test_smooth_fixed_point_matches_affine_solve(self):
        rng = np.random.default_rng(7)
        h = rng.standard_normal((3, 3))
        h = h @ h.T + 0.5 * np.eye(3)  # monotone
        c = rng.normal(size=3)
        exact = SmoothMap.affine(h, c)
        # same map exposed without the affine structure
        lip = float(np.linalg.norm(h, 2))
        kap = float(np.linalg.eigvalsh(0.5 * (h + h.T)).min())
        opaque = SmoothMap(n=3, fn=lambda x: h @ x + c, lipschitz=lip,
                           strong_convexity=kap)
        z = rng.normal(size=3)
        assert np.allclose(opaque.resolvent(z, 0.7), exact.resolvent(z, 0.7),
                           atol=1e-10)

    def test_perturbed_scaled_shifted_resolvent(self):
        # x solves x + g(A(x) + hx + c) = z; verify the inclusion directly
        b = np.array([3.0, 1.0, 0.5])
        op = Perturbed(SubdiffL1(1.0, 3), SmoothMap.affine(1.0, -b))
        z = np.array([2.5, -0.5, 4.0])
        gamma = 0.7
        x = op.resolvent(z, gamma)
        u = (z - x) / gamma - (x - b)
        assert SubdiffL1(1.0, 3).eval(x).contains(u, 1e-12)

    def test_precompose_has_no_closed_form(self):
        op = LinearPrecompose(SubdiffL1(1.0, 2), np.eye(2), np.zeros(2))
        with pytest.raises(NoClosedFormError):
            op.resolvent(np.zeros(2), 1.0)


class TestActiveManifold:
    def test_l1_support_readout(self):
        m = SubdiffL1(1.0, 3).active_manifold([2.0, 0.0, 0.0])
        assert m.support == frozenset({0})

    def test_product_of_supports(self):
        op = ProductOp((SubdiffL1(1.0, 2), SubdiffL1(1.0, 2)))
        m = op.active_manifold([1.0, 0.0, 0.0, 2.0])
        assert isinstance(m, ProductManifold)
        assert m.parts[0].support == frozenset({0})
        assert m.parts[1].support == frozenset({1})

    def test_perturbed_inherits_base_manifold(self):
        from pssso.experiments.union_demo import sign_plus_shift_operator

        m = sign_plus_shift_operator().active_manifold([6.0, 0.0, 0.0])
        assert isinstance(m, FixedSupport)
        assert m.support == frozenset({0})

    def test_smooth_map_full_space(self):
        m = SmoothMap.affine(1.0, np.zeros(3)).active_manifold()
        assert isinstance(m, AffineSubspace)
        assert m.manifold_dim == 3


class TestLocalize:
    def test_l0_localized_box(self):
        op = SubdiffL0(1.0, 2)
        loc = localize(op, [1.0, 0.0], [0.0, 0.0], 0.25)
        s = loc.eval([1.1, 0.0])
        assert np.allclose(s.lo, [0.0, -0.25])
        assert np.allclose(s.hi, [0.0, 0.25])

    def test_outside_primal_ball_is_empty(self):
        op = SubdiffL0(1.0, 2)
        loc = localize(op, [1.0, 0.0], [0.0, 0.0], 0.25)
        assert loc.eval([1.5, 0.0]) is None

    def test_l1_box_intersection(self):
        op = SubdiffL1(1.0, 3)
        loc = localize(op, [2.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.5)
        s = loc.eval([2.0, 0.0, 0.0])
        # oracle: coordinatewise interval intersection
        lo = np.maximum([1.0, -1.0, -1.0], np.array([1.0, 0.0, 0.0]) - 0.5)
        hi = np.minimum([1.0, 1.0, 1.0], np.array([1.0, 0.0, 0.0]) + 0.5)
        assert np.allclose(s.lo, lo) and np.allclose(s.hi, hi)

    def test_rejects_non_dual_vector(self):
        with pytest.raises(InvalidSetError):
            localize(SubdiffL1(1.0, 2), [1.0, 0.0], [0.0, 0.0], 0.1)

    def test_spectral_localization_clips_radius(self):
        rng = np.random.default_rng(8)
        op = SubdiffNuclear(1.0, 3, 3)
        x = 2.0 * np.outer(random_orthonormal(3, 1, rng)[:, 0],
                           random_orthonormal(3, 1, rng)[:, 0])
        ubar = op.eval(x.ravel()).center()
        loc = localize(op, x.ravel(), ubar, 0.3)
        s = loc.eval(x.ravel())
        assert s.radius == pytest.approx(0.3)


class TestContinuity:
    def test_l1_constant_along_support_manifold(self):
        m = FixedSupport(frozenset({0}), 3)
        res = check_continuity_along_manifold(
            SubdiffL1(1.0, 3), m, [6.0, 0.0, 0.0], radius=0.5, n_samples=50,
            tol=1e-9)
        assert res.ok

    def test_nuclear_continuous_along_fixed_rank(self):
        # The allowance is tol * dist + tol, so the sampling radius must be
        # commensurate with tol for value maps that vary along the manifold.
        rng = np.random.default_rng(4)
        x = 2.0 * np.outer(random_orthonormal(3, 1, rng)[:, 0],
                           random_orthonormal(3, 1, rng)[:, 0])
        op = SubdiffNuclear(1.0, 3, 3)
        m = op.active_manifold(x.ravel())
        # oracle: center matrices drift at a bounded rate along samples
        from pssso.manifolds import sample_on_manifold

        for p in sample_on_manifold(m, x.ravel(), 0.01, 20,
                                    np.random.default_rng(1)):
            drift = np.max(np.abs(op.eval(p).center() - op.eval(x.ravel()).center()))
            assert drift <= 2.0 * np.max(np.abs(p - x.ravel())) + 1e-9
        res = check_continuity_along_manifold(op, m, x.ravel(), radius=5e-7,
                                              n_samples=40, tol=1e-6, seed=2)
        assert res.ok

    def test_detects_constructed_jump(self):
        # the l1 subdifferential jumps when a coordinate crosses zero, so
        # along a manifold that frees that coordinate it is discontinuous
        basis = np.zeros((3, 1))
        basis[1, 0] = 1.0
        m = AffineSubspace(np.array([1.0, 0.0, 0.0]), basis)
        res = check_continuity_along_manifold(
            SubdiffL1(1.0, 3), m, [1.0, 0.0, 0.0], radius=0.5, n_samples=50,
            tol=1e-6, seed=0)
        assert not res.ok
        assert res.witness is not None
        assert abs(res.witness[1]) > 0


class TestOperatorProperties:
    def test_moreau_inclusion_convex_instances(self):
        rng = np.random.default_rng(10)
        ops = [SubdiffL1(0.8, 4), NormalConeBox(-np.ones(4), np.ones(4)),
               SubdiffNuclear(0.5, 2, 2)]
        for op in ops:
            for _ in range(1000):
                z = rng.normal(size=op.dim) * 2.0
                gamma = float(rng.uniform(0.1, 2.0))
                x = op.resolvent(z, gamma)
                u = (z - x) / gamma
                assert op.eval(x).contains(u, 1e-10)

    def test_firm_nonexpansiveness(self):
        rng = np.random.default_rng(11)
        ops = [SubdiffL1(1.0, 5), NormalConeBox(-np.ones(5), np.ones(5)),
               SubdiffNuclear(1.0, 2, 2)]
        for op in ops:
            for _ in range(300):
                z1 = rng.normal(size=op.dim) * 2
                z2 = rng.normal(size=op.dim) * 2
                gamma = float(rng.uniform(0.1, 2.0))
                j1, j2 = op.resolvent(z1, gamma), op.resolvent(z2, gamma)
                lhs = np.sum((j1 - j2) ** 2)
                rhs = np.dot(j1 - j2, z1 - z2)
                assert lhs <= rhs + 1e-10

    def test_monotonicity_graph_pairs(self):
        rng = np.random.default_rng(12)
        ops = [SubdiffL1(1.0, 4), NormalConeBox(-np.ones(4), np.ones(4)),
               SumOp((SubdiffL1(1.0, 4), SubdiffL1(0.5, 4)))]
        for op in ops:
            for _ in range(300):
                x = rng.normal(size=4) * (rng.random(4) > 0.3)
                y = rng.normal(size=4) * (rng.random(4) > 0.3)
                x = np.clip(x, -0.99, 0.99)
                y = np.clip(y, -0.99, 0.99)
                u = _sample_from_box(op.eval(x), rng)
                v = _sample_from_box(op.eval(y), rng)
                assert np.dot(x - y, u - v) >= -1e-12

    def test_precompose_span_identity(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            n, d = 4, 6
            g = np.linalg.qr(rng.standard_normal((d, n)))[0].T
            h = rng.normal(size=n)
            op = LinearPrecompose(SubdiffL1(1.0, n), g, h)
            z = rng.normal(size=d)
            phi = g @ z + h
            kill = rng.choice(n, 2, replace=False)
            phi[kill] = 0.0
            z = np.linalg.lstsq(g, phi - h, rcond=None)[0]
            value = op.eval(z)
            # dim of G^T Lin(A(phi(z))): rank of the off-support rows of G
            free_rows = g[np.abs(g @ z + h) <= 1e-9]
            expected = int(np.linalg.matrix_rank(free_rows, tol=1e-10))
            assert span_dimension([(np.zeros(d), value)]) == expected

    def test_precompose_rejects_nonorthogonal_generators(self):
        rng = np.random.default_rng(14)
        g = rng.standard_normal((3, 5))
        op = LinearPrecompose(SubdiffL1(1.0, 3), g, np.zeros(3))
        with pytest.raises(NoClosedFormError):
            op.eval(np.zeros(5))


def _sample_from_box(s, rng):
    lo = np.where(np.isfinite(s.lo), s.lo, -10.0)
    hi = np.where(np.isfinite(s.hi), s.hi, 10.0)
    return rng.uniform(lo, hi)


@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=1, max_size=6),
       st.floats(min_value=0.05, max_value=2.0))
@settings(max_examples=200, deadline=None)
def test_soft_threshold_is_prox_oracle(zs, gamma):
    """Hypothesis: the l1 resolvent minimizes the prox objective."""
    z = np.array(zs)
    op = SubdiffL1(1.0, z.size)
    x = op.resolvent(z, gamma)
    def cost(y):
        return gamma * np.sum(np.abs(y)) + 0.5 * np.sum((y - z) ** 2)
    base = cost(x)
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert base <= cost(x + 0.1 * rng.standard_normal(z.size)) + 1e-12

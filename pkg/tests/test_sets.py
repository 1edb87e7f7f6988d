"""Tests for the structured set variants."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pssso import (
    AffinePlusBox,
    BoxProduct,
    DimensionMismatchError,
    InvalidSetError,
    Singleton,
    SpectralSet,
    set_from_json,
    span_dimension,
)

RNG = np.random.default_rng(20240811)


def random_orthonormal(n, k, rng):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q[:, :k]


def power_iteration_opnorm(m, n_iter=500, seed=0):
    """Independent operator-norm oracle (power iteration on m^T m)."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(n_iter):
        w = m.T @ (m @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return float(np.linalg.norm(m @ v))


class TestContains:
    def test_box_center(self):
        s = BoxProduct([-1.0, -1.0], [1.0, 1.0])
        assert s.contains([0.0, 0.0], 0.0)

    def test_l1_boundary_dual_vector(self):
        # value set of the l1 subdifferential at [2,0,0]; the vector
        # [1,1,0] sits on the face u2 = 1 but is still a member
        s = BoxProduct([1.0, -1.0, -1.0], [1.0, 1.0, 1.0])
        assert s.contains([1.0, 1.0, 0.0], 0.0)
        assert not s.contains([1.0, 1.0 + 1e-6, 0.0], 0.0)

    def test_spectral_excess_radius(self):
        rng = np.random.default_rng(3)
        u = random_orthonormal(4, 1, rng)
        v = random_orthonormal(3, 1, rng)
        s = SpectralSet(u, v, radius=1.0)
        w_dir = np.linalg.svd(np.eye(4) - u @ u.T)[0][:, :1]
        wp_dir = np.linalg.svd(np.eye(3) - v @ v.T)[0][:, :1]
        m = u @ v.T + 1.5 * (w_dir @ wp_dir.T)
        # oracle for the residual norm: power iteration on the W block
        resid = m - u @ v.T
        assert power_iteration_opnorm(resid) == pytest.approx(1.5, abs=1e-9)
        assert not s.contains(m.ravel(), 1e-9)
        assert s.contains(m.ravel(), 0.5 + 1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            BoxProduct([0.0], [1.0]).contains([0.0, 0.0], 0.0)


class TestRelativeInterior:
    def test_boundary_dual_not_interior(self):
        s = BoxProduct([1.0, -1.0, -1.0], [1.0, 1.0, 1.0])
        assert not s.in_relative_interior([1.0, 1.0, 0.0], 1e-8)

    def test_center_of_free_face(self):
        s = BoxProduct([1.0, -1.0, -1.0], [1.0, 1.0, 1.0])
        assert s.in_relative_interior([1.0, 0.0, 0.0], 0.5)

    def test_singleton_any_margin(self):
        v = np.array([0.3, -2.0])
        assert Singleton(v).in_relative_interior(v, 123.0)

    def test_implies_membership_and_margin_monotonicity(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = rng.integers(1, 5)
            lo = rng.normal(size=n)
            hi = lo + rng.uniform(0.0, 2.0, n) * (rng.random(n) > 0.3)
            s = BoxProduct(lo, hi)
            v = rng.normal(size=n)
            for margin in (1e-6, 1e-2, 0.5):
                if s.in_relative_interior(v, margin):
                    assert s.contains(v, 1e-12)
                    assert s.in_relative_interior(v, margin / 2)

    @given(st.floats(min_value=1e-6, max_value=0.99))
    @settings(max_examples=50, deadline=None)
    def test_margin_monotone_hypothesis(self, margin):
        s = BoxProduct([-1.0, 0.0], [1.0, 0.0])
        v = np.array([0.0, 0.0])
        assert s.in_relative_interior(v, margin)
        assert s.in_relative_interior(v, margin / 3)
        assert not s.in_relative_interior(np.array([1.0 - margin / 2, 0.0]), margin)


class TestDistance:
    def test_box_linf(self):
        s = BoxProduct([-1.0, -1.0], [1.0, 1.0])
        assert s.distance([2.0, 0.0], "linf") == pytest.approx(1.0)

    def test_box_corner_l2(self):
        s = BoxProduct([-1.0, -1.0], [1.0, 1.0])
        assert s.distance([2.0, 2.0], "l2") == pytest.approx(np.sqrt(2.0))

    def test_affine_box_against_projected_gradient_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            dirs = random_orthonormal(3, 2, rng)
            base = rng.normal(size=3)
            lo = np.array([-0.5, -1.0])
            hi = np.array([0.75, 0.25])
            s = AffinePlusBox(base, dirs, lo, hi)
            v = rng.normal(size=3) * 2.0

            # projection oracle: projected gradient on the free coordinates
            t = np.zeros(2)
            for _ in range(4000):
                grad = dirs.T @ (base + dirs @ t - v)
                t = np.clip(t - 0.5 * grad, lo, hi)
            oracle = float(np.linalg.norm(base + dirs @ t - v))
            assert s.distance(v, "l2") == pytest.approx(oracle, abs=1e-8)

    def test_affine_box_linf_exact_vs_grid(self):
        # brute grid oracle over the free coordinate
        rng = np.random.default_rng(5)
        dirs = random_orthonormal(3, 1, rng)
        base = rng.normal(size=3)
        s = AffinePlusBox(base, dirs, [-1.0], [2.0])
        v = rng.normal(size=3) * 1.5
        ts = np.linspace(-1.0, 2.0, 300001)
        pts = base[None, :] + ts[:, None] * dirs[:, 0][None, :]
        oracle = np.min(np.max(np.abs(pts - v[None, :]), axis=1))
        assert s.distance(v, "linf") == pytest.approx(oracle, abs=1e-5)

    def test_spectral_frobenius_distance(self):
        rng = np.random.default_rng(13)
        u = random_orthonormal(3, 1, rng)
        v = random_orthonormal(3, 1, rng)
        s = SpectralSet(u, v, radius=0.5, scale=2.0)
        m = s.center_matrix() + rng.normal(size=(3, 3)) * 0.1
        # oracle: soft-clip singular values of the W block, keep the rest
        d = m - s.center_matrix()
        pu, pv = u @ u.T, v @ v.T
        dw = (np.eye(3) - pu) @ d @ (np.eye(3) - pv)
        dc = d - dw
        uu, sig, vv = np.linalg.svd(dw)
        w_best = (uu * np.minimum(sig, 0.5)) @ vv
        oracle = float(np.linalg.norm(dc + dw - w_best))
        assert s.distance(m.ravel(), "l2") == pytest.approx(oracle, abs=1e-10)


class TestMembershipDistanceConsistency:
    """contains(S, v, tol) must agree with distance(v, S, linf) <= tol."""

    def _check(self, s, v, rng):
        tol = float(rng.uniform(0.0, 1.0))
        d = s.distance(v, "linf")
        if s.contains(v, tol):
            assert d <= tol + 1e-12
        if d <= tol - 1e-12:
            assert s.contains(v, tol)

    def test_thousand_pairs_per_variant(self):
        rng = np.random.default_rng(101)
        for _ in range(1000):
            n = int(rng.integers(1, 5))
            v = rng.normal(size=n) * 2.0
            self._check(Singleton(rng.normal(size=n)), v, rng)
            lo = rng.normal(size=n)
            hi = lo + rng.uniform(0, 1.5, n) * (rng.random(n) > 0.25)
            lo2, hi2 = lo.copy(), hi.copy()
            lo2[rng.random(n) < 0.1] = -np.inf
            hi2[rng.random(n) < 0.1] = np.inf
            self._check(BoxProduct(np.minimum(lo2, hi2), hi2), v, rng)
        for _ in range(1000):
            k = int(rng.integers(1, 3))
            dirs = random_orthonormal(3, k, rng)
            s = AffinePlusBox(rng.normal(size=3), dirs,
                              -rng.uniform(0.1, 1, k), rng.uniform(0.1, 1, k))
            self._check(s, rng.normal(size=3) * 2.0, rng)
        for _ in range(1000):
            u = random_orthonormal(3, 1, rng)
            vv = random_orthonormal(3, 1, rng)
            s = SpectralSet(u, vv, radius=float(rng.uniform(0, 1)))
            self._check(s, rng.normal(size=9), rng)


class TestSpectralUnitaryInvariance:
    def test_membership_invariant(self):
        rng = np.random.default_rng(77)
        u = random_orthonormal(4, 2, rng)
        v = random_orthonormal(4, 2, rng)
        s = SpectralSet(u, v, radius=0.8, scale=1.3)
        for _ in range(20):
            q1 = random_orthonormal(4, 4, rng)
            q2 = random_orthonormal(4, 4, rng)
            s_rot = SpectralSet(q1 @ u, q2 @ v, radius=0.8, scale=1.3)
            m = s.center_matrix() + rng.normal(size=(4, 4)) * 0.3
            m_rot = q1 @ m @ q2.T
            for tol in (1e-9, 0.2, 0.6):
                assert s.contains(m.ravel(), tol) == \
                    s_rot.contains(m_rot.ravel(), tol)


class TestSpanDimension:
    def test_singleton_origin(self):
        assert span_dimension([(np.zeros(3), Singleton(np.zeros(3)))]) == 0

    def test_l0_local_union_family(self):
        # union over the support line of points plus the free dual line
        fam = [(np.array([t, 0.0]), BoxProduct([0.0, -np.inf], [0.0, np.inf]))
               for t in (0.9, 1.0, 1.1)]
        assert span_dimension(fam) == 2

    def test_sign_shift_union_full_dimension(self):
        # translated sign operator at [6,0,0] sampled at 5 support points
        from pssso.experiments.union_demo import sign_plus_shift_operator

        op = sign_plus_shift_operator()
        entries = []
        for t in np.linspace(5.8, 6.2, 5):
            x = np.array([t, 0.0, 0.0])
            entries.append((x, op.eval(x)))
        assert span_dimension(entries) == 3

    def test_never_exceeds_ambient_and_monotone(self):
        rng = np.random.default_rng(31)
        entries = []
        prev = 0
        for _ in range(6):
            lo = rng.normal(size=4)
            width = rng.uniform(0, 1, 4) * (rng.random(4) > 0.5)
            entries.append((rng.normal(size=4), BoxProduct(lo, lo + width)))
            dim = span_dimension(entries)
            assert prev <= dim <= 4
            prev = dim


class TestValidationAndJson:
    def test_bad_box(self):
        with pytest.raises(InvalidSetError):
            BoxProduct([1.0], [0.0])

    def test_non_orthonormal_dirs(self):
        with pytest.raises(InvalidSetError):
            AffinePlusBox(np.zeros(2), np.array([[1.0], [1.0]]), [0.0], [1.0])

    def test_negative_radius(self):
        with pytest.raises(InvalidSetError):
            SpectralSet(np.eye(2)[:, :1], np.eye(2)[:, :1], radius=-1.0)

    def test_center_membership_every_variant(self):
        rng = np.random.default_rng(4)
        sets = [
            Singleton(rng.normal(size=3)),
            BoxProduct([-1.0, 0.0, -np.inf], [1.0, 0.0, np.inf]),
            AffinePlusBox(rng.normal(size=3), random_orthonormal(3, 2, rng),
                          [-1.0, -np.inf], [1.0, np.inf]),
            SpectralSet(random_orthonormal(3, 1, rng),
                        random_orthonormal(3, 1, rng), radius=0.5, scale=2.0),
        ]
        for s in sets:
            assert s.contains(s.center(), 1e-10)

    def test_json_round_trip(self):
        rng = np.random.default_rng(9)
        sets = [
            Singleton([1.0, 2.0]),
            BoxProduct([-1.0, -np.inf], [1.0, np.inf]),
            AffinePlusBox(np.zeros(3), random_orthonormal(3, 1, rng),
                          [-np.inf], [2.0]),
            SpectralSet(random_orthonormal(3, 2, rng),
                        random_orthonormal(3, 2, rng), 0.7, 1.5),
        ]
        for s in sets:
            blob = json.dumps(s.to_json_dict())
            back = set_from_json(json.loads(blob))
            assert type(back) is type(s)
            assert back.contains(s.center(), 1e-10)
            v = rng.normal(size=s.dim)
            assert back.distance(v, "l2") == pytest.approx(
                s.distance(v, "l2"), abs=1e-12)

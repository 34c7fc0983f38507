import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from conftest import brute_kappa
from qmresolvent.errors import InfiniteAtReference, NotPtolemy, NotQuasiMetric, Unbounded
from qmresolvent.instances import make_rng, random_quasimetric
from qmresolvent.neumann import iterated_kernels, minimal_solution, operator_norm
from qmresolvent.space import (
    KernelMatrix,
    MeasureSpace,
    Modifier,
    diagnose,
    extend_with_far_point,
    find_modifier,
    floyd_warshall,
    modify,
    pairwise_distances,
    ptolemy_constant,
    quasimetric_constant,
    snowflake,
)


def kernel_from_points(pts, power=1.0, eps=0.0):
    d = pairwise_distances(pts) ** power + eps
    return KernelMatrix.from_distances(d)


@st.composite
def quasimetric_kernels(draw, max_n=8):
    n = draw(st.integers(1, max_n))
    pts = draw(hnp.arrays(float, (n, 2), elements=st.floats(0, 1)))
    p = draw(st.floats(0.5, 3.0))
    eps = draw(st.floats(1e-3, 1.0))
    return kernel_from_points(pts, p, eps)


class TestTypes:
    def test_measure_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            MeasureSpace(np.array([1.0, 0.0]))
        with pytest.raises(ValueError):
            MeasureSpace(np.array([1.0, np.inf]))
        with pytest.raises(ValueError):
            MeasureSpace(np.array([]))

    def test_kernel_invariants(self):
        with pytest.raises(ValueError):
            KernelMatrix(np.array([[1.0, 2.0], [2.0 + 1e-15, 1.0]]))
        with pytest.raises(ValueError):
            KernelMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            KernelMatrix(np.array([[np.nan]]))
        with pytest.raises(ValueError):
            KernelMatrix(np.array([[5.0]]), cap=1.0)

    def test_arrays_are_read_only(self):
        K = KernelMatrix(np.ones((2, 2)))
        with pytest.raises(ValueError):
            K.entries[0, 0] = 3.0

    def test_modifier_positive(self):
        with pytest.raises(ValueError):
            Modifier(np.array([1.0, -1.0]))

    def test_default_cap(self):
        K = KernelMatrix(np.array([[np.inf, 2.0], [2.0, np.inf]]))
        assert K.default_cap() == 2e12
        C = K.clamp()
        assert C.cap == 2e12 and C.is_finite
        assert C.clamped_mask().tolist() == [[True, False], [False, True]]


class TestQuasimetricConstant:
    def test_collinear_metric(self):
        K = kernel_from_points(np.array([[0.0], [1.0], [2.0]]))
        kappa, wit = quasimetric_constant(K)
        assert kappa == 1.0
        assert wit == (0, 2, 1)

    def test_constant_kernel_attains_half(self):
        kappa, _ = quasimetric_constant(KernelMatrix(np.array([[1.0]])))
        assert kappa == 0.5
        kappa, _ = quasimetric_constant(KernelMatrix(np.full((5, 5), 3.0)))
        assert kappa == 0.5

    def test_squared_euclidean_matches_brute_force(self, rng):
        pts = rng.random((20, 2))
        d = pairwise_distances(pts) ** 2
        K = KernelMatrix.from_distances(d)
        d = K.distances()
        kappa, wit = quasimetric_constant(K)
        assert kappa == brute_kappa(d.tolist())
        i, j, k = wit
        assert d[i, j] / (d[i, k] + d[k, j]) == kappa

    def test_not_quasimetric(self):
        # d(0,1) = d(1,2) = 0 but d(0,2) = 1
        e = np.array([[1.0, np.inf, 1.0], [np.inf, 1.0, np.inf], [1.0, np.inf, 1.0]])
        with pytest.raises(NotQuasiMetric) as exc:
            quasimetric_constant(KernelMatrix(e))
        i, j, k = exc.value.witness
        d = KernelMatrix(e).distances()
        assert d[i, j] > 0 and d[i, k] + d[k, j] == 0

    @settings(max_examples=60, deadline=None)
    @given(quasimetric_kernels())
    def test_kappa_at_least_half_and_matches_oracle(self, K):
        kappa, _ = quasimetric_constant(K)
        assert kappa >= 0.5
        assert kappa == pytest.approx(brute_kappa(K.distances().tolist()), rel=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(quasimetric_kernels(), st.floats(0.5, 100.0), st.floats(1.0, 10.0))
    def test_clamp_monotone_and_kappa_preserved(self, K, cap1, ratio):
        cap1 = cap1 * float(K.entries.min())
        cap2 = cap1 * ratio
        a, b = K.clamp(cap1), K.clamp(cap2)
        assert np.all(a.entries <= b.entries)
        big = K.clamp(float(K.entries.max()))
        assert quasimetric_constant(big)[0] == quasimetric_constant(K)[0]


def brute_ptolemy(d):
    best = -1.0
    for y1, y2, y3, y4 in itertools.product(range(len(d)), repeat=4):
        a, b, c, dd = d[y1][y2], d[y2][y3], d[y3][y4], d[y4][y1]
        s, t = d[y2][y4], d[y1][y3]
        den = max(a * c, b * dd)
        if den == 0:
            continue
        best = max(best, s * t / den)
    return best


class TestPtolemy:
    def test_unit_square(self):
        K = kernel_from_points(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float))
        cp, wit = ptolemy_constant(K)
        assert cp == pytest.approx(2.0, rel=1e-15)
        assert quasimetric_constant(K)[0] == pytest.approx(1.0)

    def test_equal_distances(self):
        cp, _ = ptolemy_constant(KernelMatrix(np.full((4, 4), 2.0)))
        assert cp == 1.0

    def test_matches_brute_force(self, rng):
        d = pairwise_distances(rng.random((7, 2))) ** 1.7 + 0.01
        K = KernelMatrix.from_distances(d)
        d = K.distances()
        cp, wit = ptolemy_constant(K)
        assert cp == pytest.approx(brute_ptolemy(d.tolist()), rel=1e-14)
        y1, y2, y3, y4 = wit
        num = d[y2, y4] * d[y1, y3]
        assert num / max(d[y1, y2] * d[y3, y4], d[y2, y3] * d[y4, y1]) == cp

    def test_not_ptolemy(self):
        # d(0,1) = 0 with positive self-distances: (0,1,0,1) has st = 1, ac = bd = 0
        d = np.array([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(NotPtolemy):
            ptolemy_constant(d)

    @settings(max_examples=40, deadline=None)
    @given(quasimetric_kernels(max_n=6))
    def test_bounded_by_four_kappa_squared(self, K):
        kappa, _ = quasimetric_constant(K)
        cp, _ = ptolemy_constant(K)
        assert cp <= 4 * kappa**2 * (1 + 1e-12)


class TestSnowflake:
    def test_floyd_warshall_keeps_self_loops(self):
        L = np.array([[5.0, 1.0, 9.0], [1.0, 5.0, 1.0], [9.0, 1.0, 5.0]])
        D = floyd_warshall(L)
        assert D[0, 2] == 2.0
        assert D[0, 0] == 2.0  # 0 -> 1 -> 0

    def test_metric_case(self, rng):
        K = kernel_from_points(rng.random((10, 2)))
        sf = snowflake(K)
        assert sf.beta == 2.0
        d = K.distances()
        Db = sf.D**sf.beta
        assert np.all(Db <= d * (1 + 1e-12))
        assert np.all(d <= 4 * Db * (1 + 1e-12))

    def test_single_point(self):
        sf = snowflake(KernelMatrix(np.array([[0.25]])))
        assert sf.kappa == 0.5
        assert sf.D[0, 0] == pytest.approx(4.0 ** (1 / sf.beta))
        assert sf.comparability == pytest.approx(1.0)

    def test_random_kappa_near_two(self):
        K, _ = random_quasimetric(make_rng(11, 0), 15, "power", p=2.0, eps=1e-3)
        sf = snowflake(K)
        assert 1.5 < sf.kappa < 2.5
        assert sf.beta == pytest.approx(2 * math.log2(2 * sf.kappa))
        D = sf.D
        for i, j, k in itertools.product(range(15), repeat=3):
            assert D[i, j] <= (D[i, k] + D[k, j]) * (1 + 1e-12)
        assert sf.triangle_constant <= 1 + 1e-12
        assert sf.lower_ok
        assert sf.comparability <= sf.comparability_bound * (1 + 1e-12)

    def test_unbounded(self):
        with pytest.raises(Unbounded):
            snowflake(np.array([[0.0, np.inf], [np.inf, 0.0]]))


class TestModifiers:
    def test_find_modifier_keeps_quasimetric(self, small_instance):
        K, omega = small_instance
        m = find_modifier(K, 3)
        assert m.source == "reference_point" and m.param == 3
        Kt, _ = modify(K, omega, m)
        kappa, _ = quasimetric_constant(Kt)
        assert math.isfinite(kappa)

    def test_find_modifier_single_point(self):
        K = KernelMatrix(np.array([[4.0]]))
        m = find_modifier(K, 0)
        assert m.values.tolist() == [4.0]
        Kt, _ = modify(K, MeasureSpace(np.ones(1)), m)
        assert Kt.entries[0, 0] == 0.25
        assert quasimetric_constant(Kt)[0] == 0.5

    def test_find_modifier_refuses_infinite(self):
        K = KernelMatrix(np.array([[np.inf, 1.0], [1.0, 1.0]]))
        with pytest.raises(InfiniteAtReference):
            find_modifier(K, 0)

    def test_identity_modifier(self, small_instance):
        K, omega = small_instance
        Kt, wt = modify(K, omega, np.ones(K.n))
        assert np.array_equal(Kt.entries, K.entries)
        assert np.array_equal(wt.weights, omega.weights)

    def test_norm_and_iterates_covariant(self, small_instance, rng):
        K, omega = small_instance
        m = rng.uniform(0.2, 5.0, K.n)
        Kt, wt = modify(K, omega, m)
        assert operator_norm(Kt, wt) == pytest.approx(operator_norm(K, omega), rel=1e-10)
        K2 = iterated_kernels(K, omega, 2)[1]
        K2t = iterated_kernels(Kt, wt, 2)[1]
        np.testing.assert_allclose(K2t, K2 / np.outer(m, m), rtol=1e-13)

    @settings(max_examples=50, deadline=None)
    @given(quasimetric_kernels(), st.data())
    def test_involution(self, K, data):
        m = data.draw(hnp.arrays(float, K.n, elements=st.floats(0.1, 10.0)))
        omega = MeasureSpace(np.linspace(0.5, 1.5, K.n))
        Kt, wt = modify(K, omega, m)
        Kb, wb = modify(Kt, wt, 1.0 / m)
        # four roundings per entry at most
        np.testing.assert_allclose(Kb.entries, K.entries, rtol=8 * np.finfo(float).eps)
        np.testing.assert_allclose(wb.weights, omega.weights, rtol=8 * np.finfo(float).eps)


class TestFarPoint:
    def test_single_point(self):
        ext = extend_with_far_point(KernelMatrix(np.array([[1.0]])), MeasureSpace(np.array([0.5])))
        assert ext.diameter == 1.0
        assert ext.z == 1
        assert ext.omega.weights[1] == 0.0
        assert quasimetric_constant(ext.K)[0] == pytest.approx(1.0)

    def test_kappa_star(self, small_instance):
        K, omega = small_instance
        kappa, _ = quasimetric_constant(K)
        ext = extend_with_far_point(K, omega)
        assert quasimetric_constant(ext.K)[0] <= max(kappa, 1.0) * (1 + 1e-12)

    def test_T1_identity_and_u0(self, small_instance):
        K, omega = small_instance
        omega = omega.scaled(0.5 / operator_norm(K, omega))
        ext = extend_with_far_point(K, omega)
        it = iterated_kernels(ext.K, ext.omega, 2)
        z = ext.z
        T1 = K.entries @ omega.weights
        np.testing.assert_allclose(it[1][:z, z] / it[0][:z, z], T1, rtol=1e-12)

        k = ext.K.entries
        w = ext.omega.weights
        H = np.linalg.solve(np.eye(K.n + 1) - k * w[None, :], k)
        u_far = ext.diameter * H[:z, z]
        u0 = minimal_solution(K, omega).u0
        np.testing.assert_allclose(u_far, u0, rtol=1e-8)

    def test_unbounded(self):
        # 1 / 5e-324 overflows to an infinite distance
        K = KernelMatrix(np.array([[1.0, 5e-324], [5e-324, 1.0]]))
        with pytest.raises(Unbounded):
            extend_with_far_point(K, MeasureSpace(np.ones(2)))


class TestDiagnose:
    def test_report_fields(self, small_instance):
        K, _ = small_instance
        rep = diagnose(K)
        d = rep.to_dict()
        assert d["ptolemy"] <= d["ptolemy_bound"]
        assert rep.beta == pytest.approx(2 * math.log2(2 * rep.kappa))
        assert rep.snowflake_comparability <= (2 * rep.kappa) ** 2

    def test_ptolemy_skipped_above_limit(self, small_instance):
        K, _ = small_instance
        rep = diagnose(K, ptolemy_limit=5)
        assert rep.ptolemy is None and rep.notes

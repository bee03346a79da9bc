import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorpf import (
    DegreeError,
    NonnegTensor,
    NormWeights,
    PolynomialMap,
    VanishingSliceError,
    apply,
    build_poly_map,
    build_tensor_map,
    evaluate_poly,
    evaluate_slots,
    hilbert_distance,
    normalize,
    tensor_system,
)
from tensorpf.core import split_blocks

from _support import (
    all_ones,
    diag_offdiag_tensor,
    random_monotone_tensor_map,
    random_poly_map,
    random_polymap,
    random_sparse_tensor,
    seeds,
)

SWAP_SQUARES = PolynomialMap(2, [[((0, 2), 1.0)], [((2, 0), 1.0)]])
SWAP = PolynomialMap(2, [[((0, 1), 1.0)], [((1, 0), 1.0)]])


def tensor_F_reference(T, p, x):
    """Direct per-block evaluation of the tensor map, no log-space tricks."""
    P = max(p)
    S = split_blocks(evaluate_slots(T, x), T.dims)
    out = []
    for xb, sb, pj in zip(split_blocks(x, T.dims), S, p):
        nrm = np.sum(xb ** pj) ** (1.0 / pj)
        out.append((xb ** (P - pj) * nrm ** (pj - T.d) * sb) ** (1.0 / (P - 1)))
    return np.concatenate(out)


def poly_F_reference(P, deltas, p, a, x):
    D = max(deltas)
    nrm = np.sum(x ** p) ** (1.0 / p)
    out = np.zeros(P.n)
    for i, comp in enumerate(P.components()):
        for e, c in comp:
            e = np.array(e)
            out[i] += c * x[i] ** (D - deltas[i]) * (nrm / a) ** (deltas[i] - e.sum()) * np.prod(x ** e)
    return out ** (1.0 / D)


class TestTensorMap:
    def test_all_ones(self):
        F = build_tensor_map(all_ones(), [3, 3, 3])
        np.testing.assert_allclose(F(np.ones(6)), 2.0)
        assert F.monotone

    def test_fixture_value(self):
        F = build_tensor_map(diag_offdiag_tensor(1.2, 0.2), [3, 3, 3])
        np.testing.assert_allclose(F(np.ones(6)), np.sqrt(1.8), rtol=1e-14)

    def test_vanishing_slice_rejected(self):
        T = NonnegTensor((2, 2, 2), [((0, 0, 0), 1.0), ((0, 1, 1), 1.0)])
        with pytest.raises(VanishingSliceError):
            build_tensor_map(T, [3, 3, 3])

    def test_invalid_exponents(self):
        with pytest.raises(ValueError):
            build_tensor_map(all_ones(), [1.0, 3, 3])
        with pytest.raises(ValueError):
            build_tensor_map(all_ones(), [3, 3])

    def test_scalar_p_broadcasts(self):
        F = build_tensor_map(all_ones(), [3])
        assert F.w.p == (3.0, 3.0, 3.0)

    def test_non_monotone_flag(self):
        assert not build_tensor_map(diag_offdiag_tensor(1.2, 0.2), [2, 2, 2]).monotone
        assert not build_tensor_map(diag_offdiag_tensor(1.2, 0.2), [3, 3, 2.5]).monotone

    def test_rejects_boundary_points(self):
        F = build_tensor_map(all_ones(), [3, 3, 3])
        for bad in ([0, 1, 1, 1, 1, 1], [-1, 1, 1, 1, 1, 1], [np.nan, 1, 1, 1, 1, 1]):
            with pytest.raises(ValueError):
                F(np.array(bad, dtype=float))

    @settings(max_examples=60, deadline=None)
    @given(seed=seeds)
    def test_matches_reference_formula(self, seed):
        rng = np.random.default_rng(seed)
        T = random_sparse_tensor(rng)
        try:
            F = build_tensor_map(T, rng.uniform(1.2, 5.0, size=T.d))
        except VanishingSliceError:
            return
        x = rng.uniform(0.1, 3.0, size=T.n)
        np.testing.assert_allclose(F(x), tensor_F_reference(T, F.w.p, x), rtol=1e-11)

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds)
    def test_agrees_with_slot_system_at_p_equal_d(self, seed):
        rng = np.random.default_rng(seed)
        T = random_sparse_tensor(rng)
        try:
            F = build_tensor_map(T, NormWeights.uniform(T.d, T.d))
        except VanishingSliceError:
            return
        G = build_poly_map(tensor_system(T))
        x = rng.uniform(0.1, 3.0, size=T.n)
        np.testing.assert_allclose(F(x), G(x), rtol=1e-12)


class TestPolyMap:
    def test_homogeneous_reduction_example(self):
        F = build_poly_map(SWAP_SQUARES)
        np.testing.assert_allclose(F([4.0, 1.0]), [1.0, 4.0], rtol=1e-15)

    def test_lower_degree_example(self):
        F = build_poly_map(SWAP, [2, 2], p=2, a=1)
        np.testing.assert_allclose(F([3.0, 4.0]), np.sqrt([20.0, 15.0]), rtol=1e-14)

    def test_degree_error(self):
        with pytest.raises(DegreeError):
            build_poly_map(SWAP_SQUARES, [1, 2])

    def test_parameter_errors(self):
        for kwargs in ({"p": 0.0}, {"a": -1.0}):
            with pytest.raises(ValueError):
                build_poly_map(SWAP, **kwargs)
        with pytest.raises(ValueError):
            build_poly_map(PolynomialMap(2, [[((1, 0), 1.0)], []]))

    @settings(max_examples=60, deadline=None)
    @given(seed=seeds)
    def test_matches_reference_formula(self, seed):
        rng = np.random.default_rng(seed)
        F = random_poly_map(rng)
        x = rng.uniform(0.1, 3.0, size=F.n)
        ref = poly_F_reference(F.P, F.deltas, F.p, F.a, x)
        np.testing.assert_allclose(F(x), ref, rtol=1e-11)

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds)
    def test_reduction_identity(self, seed):
        # homogeneous P of common degree d with delta_i = d: F_i^d = P_i
        rng = np.random.default_rng(seed)
        P = random_polymap(rng, homogeneous=True)
        d = int(P.degrees.max())
        F = build_poly_map(P)
        x = rng.uniform(0.1, 3.0, size=P.n)
        np.testing.assert_allclose(F(x) ** d, evaluate_poly(P, x), rtol=1e-12)


def random_map(rng):
    if rng.random() < 0.5:
        while True:
            try:
                return random_monotone_tensor_map(rng, positive=rng.random() < 0.5)
            except VanishingSliceError:
                continue
    return random_poly_map(rng)


class TestMapProperties:
    @settings(max_examples=80, deadline=None)
    @given(seed=seeds, t=st.sampled_from([0.5, 2.0, 7.0]))
    def test_homogeneity(self, seed, t):
        rng = np.random.default_rng(seed)
        F = random_map(rng)
        x = rng.uniform(0.05, 5.0, size=F.n)
        np.testing.assert_allclose(F(t * x), t * F(x), rtol=1e-12)

    @settings(max_examples=80, deadline=None)
    @given(seed=seeds)
    def test_monotonicity(self, seed):
        rng = np.random.default_rng(seed)
        F = random_map(rng)
        assert F.monotone
        x = rng.uniform(0.05, 5.0, size=F.n)
        y = x + rng.uniform(0.0, 2.0, size=F.n) * (rng.random(F.n) < 0.5)
        assert np.all(F(x) <= F(y) * (1 + 1e-12))

    @settings(max_examples=80, deadline=None)
    @given(seed=seeds)
    def test_hilbert_nonexpansive(self, seed):
        rng = np.random.default_rng(seed)
        F = random_map(rng)
        x = rng.uniform(0.05, 5.0, size=F.n)
        y = rng.uniform(0.05, 5.0, size=F.n)
        assert hilbert_distance(F(x), F(y)) <= hilbert_distance(x, y) + 1e-12

    def test_non_monotone_map_breaks_monotonicity(self):
        # p < d: raising one coordinate can lower another output
        F = build_tensor_map(diag_offdiag_tensor(1.2, 0.2), [1.5, 1.5, 1.5])
        x = np.ones(6)
        y = x.copy()
        y[1] = 3.0
        assert np.any(F(y) < F(x))

    def test_batched_apply(self):
        F = build_tensor_map(diag_offdiag_tensor(1.2, 0.2), [3, 4, 5])
        X = np.random.default_rng(0).uniform(0.1, 2.0, size=(4, 6))
        np.testing.assert_allclose(apply(F, X), np.array([F(x) for x in X]))


class TestHilbertDistance:
    def test_examples(self):
        x = np.array([1.0, 2.0, 3.0])
        assert hilbert_distance(x, x) == 0.0
        assert hilbert_distance([1, 1], [2, 1]) == pytest.approx(np.log(2))
        assert hilbert_distance(x, 4.5 * x) == pytest.approx(0.0, abs=1e-15)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            hilbert_distance([1, 0], [1, 1])

    @settings(max_examples=100, deadline=None)
    @given(seed=seeds)
    def test_metric_axioms(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 8))
        x, y, z = rng.uniform(0.01, 10.0, size=(3, n))
        dxy = hilbert_distance(x, y)
        assert dxy >= 0
        assert dxy == pytest.approx(hilbert_distance(y, x), abs=1e-12)
        assert hilbert_distance(x, z) <= dxy + hilbert_distance(y, z) + 1e-12
        assert hilbert_distance(x, rng.uniform(0.1, 10) * y) == pytest.approx(dxy, abs=1e-12)


class TestNormalize:
    def test_all_ones(self):
        F = build_tensor_map(all_ones(), [3, 3, 3])
        np.testing.assert_allclose(normalize(F, np.ones(6), np.ones(6)), 1 / 6)

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds)
    def test_slice_and_scale_invariance(self, seed):
        rng = np.random.default_rng(seed)
        F = random_map(rng)
        psi = rng.uniform(0.1, 2.0, size=F.n)
        x = rng.uniform(0.1, 2.0, size=F.n)
        g = normalize(F, psi, x)
        assert psi @ g == pytest.approx(1.0, rel=1e-14)
        assert np.all(g > 0)
        np.testing.assert_allclose(normalize(F, psi, 3.7 * x), g, rtol=1e-13)

    def test_invalid_psi(self):
        F = build_tensor_map(all_ones(), [3, 3, 3])
        with pytest.raises(ValueError):
            normalize(F, np.zeros(6), np.ones(6))
        with pytest.raises(ValueError):
            normalize(F, -np.ones(6), np.ones(6))

import warnings

import numpy as np
import pytest
from hypothesis import given, settings

from tensorpf import (
    DegreeError,
    DimensionError,
    MaxIterExceeded,
    NonMonotoneMap,
    NotPrimitive,
    NormWeights,
    PolynomialMap,
    SolverConfig,
    block_normalize,
    build_poly_map,
    build_tensor_map,
    collatz_wielandt_bounds,
    evaluate_form,
    hilbert_distance,
    is_irreducible_tensor,
    multi_start_solve,
    power_solve,
    verify_complex_eigenpair,
    verify_solution,
)

from _support import (
    MATRIX_A,
    MATRIX_A_P15_PRINTED,
    all_ones,
    diag_offdiag_tensor,
    random_primitive_instance,
    random_sparse_tensor,
    seeds,
)
from tensorpf import NonnegTensor, VanishingSliceError

F1 = diag_offdiag_tensor(1.2, 0.2)
CUBE_ROOT_HALF = 0.5 ** (1 / 3)
SWAP = PolynomialMap(2, [[((0, 1), 1.0)], [((1, 0), 1.0)]])
SWAP_SQUARES = PolynomialMap(2, [[((0, 2), 1.0)], [((2, 0), 1.0)]])


class TestPowerSolve:
    def test_all_ones(self):
        sol = power_solve(build_tensor_map(all_ones(), [3, 3, 3]))
        np.testing.assert_allclose(sol.u, np.full(6, 1 / 6), rtol=1e-12)
        assert sol.mu == pytest.approx(2.0, rel=1e-12)
        assert sol.converged and sol.residual <= 1e-10

    def test_f1_unique_solution(self):
        sol = power_solve(build_tensor_map(F1, [3, 3, 3]))
        np.testing.assert_allclose(sol.x, CUBE_ROOT_HALF, atol=1e-10)
        assert sol.lam == pytest.approx(1.8, rel=1e-10)
        assert len(sol.blocks) == 3
        for b in sol.blocks:
            assert np.sum(b ** 3) == pytest.approx(1.0, abs=1e-12)
        assert sol.system_residual <= 1e-9

    def test_success_postconditions(self):
        sol = power_solve(build_tensor_map(F1, [3, 4, 5]))
        assert sol.psi @ sol.u == pytest.approx(1.0, abs=1e-14)
        lo, hi = sol.bracket
        assert (hi - lo) <= 1e-10 * hi
        assert sol.residual <= 1e-10

    def test_two_cycle_is_not_primitive(self):
        with pytest.raises(NotPrimitive) as info:
            power_solve(build_poly_map(SWAP, [1, 1]))
        assert info.value.cyclicity == 2 and info.value.strongly_connected

    def test_not_strongly_connected(self):
        P = PolynomialMap(2, [[((1, 0), 1.0)], [((1, 0), 1.0), ((0, 1), 1.0)]])
        with pytest.raises(NotPrimitive) as info:
            power_solve(build_poly_map(P))
        assert not info.value.strongly_connected
        with pytest.raises(NotPrimitive):
            power_solve(build_poly_map(P), SolverConfig(allow_nonprimitive=True))

    def test_override_warns_and_notes(self):
        cfg = SolverConfig(allow_nonprimitive=True, damping=0.5)
        with pytest.warns(RuntimeWarning, match="cyclicity 2"):
            sol = power_solve(build_poly_map(SWAP_SQUARES), cfg)
        assert sol.notes and "cyclicity 2" in sol.notes[0]
        assert sol.lam == pytest.approx(1.0, rel=1e-9)

    def test_non_monotone_rejected(self):
        with pytest.raises(NonMonotoneMap):
            power_solve(build_tensor_map(F1, [2, 2, 2]))

    def test_max_iter_carries_best_iterate(self):
        F = build_tensor_map(F1, [3, 3, 3])
        with pytest.raises(MaxIterExceeded) as info:
            power_solve(F, SolverConfig(max_iter=3), x0=np.arange(1.0, 7.0))
        sol = info.value.solution
        assert not sol.converged and sol.iterations == 3
        assert sol.cw_trace.shape == (4, 2)
        lo, hi = sol.bracket
        assert lo <= np.sqrt(1.8) <= hi

    def test_invalid_start_and_config(self):
        F = build_tensor_map(F1, [3, 3, 3])
        with pytest.raises(DimensionError):
            power_solve(F, x0=np.ones(5))
        with pytest.raises(ValueError):
            power_solve(F, x0=np.r_[0.0, np.ones(5)])
        for bad in ({"tol": 0.0}, {"max_iter": 0}, {"damping": 1.5}, {"damping": 0.0}, {"psi": [1, -1]}):
            with pytest.raises(ValueError):
                SolverConfig(**bad)
        with pytest.raises(DimensionError):
            power_solve(F, SolverConfig(psi=[1.0, 1.0]))

    def test_start_independence(self):
        F = build_tensor_map(F1, [3, 3, 3])
        rng = np.random.default_rng(2024)
        ref = power_solve(F).u
        for _ in range(100):
            u = power_solve(F, x0=rng.standard_exponential(6)).u
            assert hilbert_distance(u, ref) <= 1e-8

    def test_iterates_stay_positive_and_brackets_contain_mu(self):
        rng = np.random.default_rng(8)
        for kind in ("tensor", "poly"):
            for _ in range(10):
                F = random_primitive_instance(rng, kind)
                sol = power_solve(F, x0=rng.standard_exponential(F.n))
                assert np.all(sol.u > 0)
                lo, hi = sol.cw_trace[:, 0], sol.cw_trace[:, 1]
                assert np.all(lo > 0)
                assert np.all(lo <= sol.mu * (1 + 1e-13)) and np.all(sol.mu <= hi * (1 + 1e-13))


class TestPsiInvariance:
    @settings(max_examples=25, deadline=None)
    @given(seed=seeds)
    def test_limit_ray_independent_of_psi(self, seed):
        rng = np.random.default_rng(seed)
        F = random_primitive_instance(rng, "tensor" if rng.random() < 0.5 else "poly")
        a = power_solve(F, SolverConfig(psi=rng.uniform(0.1, 3.0, F.n)))
        b = power_solve(F, SolverConfig(psi=rng.uniform(0.1, 3.0, F.n)))
        assert hilbert_distance(a.x, b.x) <= 1e-8
        np.testing.assert_allclose(a.x, b.x, rtol=1e-8, atol=1e-12)
        assert a.lam == pytest.approx(b.lam, rel=1e-8)


class TestCollatzWielandt:
    def test_examples(self):
        F = build_poly_map(PolynomialMap(2, [[((1, 1), 1.0)], [((2, 0), 1.0)]]))
        np.testing.assert_allclose(F([1.0, 4.0]), [2.0, 1.0])
        assert collatz_wielandt_bounds(F, [1.0, 4.0]) == pytest.approx((0.25, 2.0))
        G = build_tensor_map(all_ones(), [3, 3, 3])
        assert collatz_wielandt_bounds(G, np.ones(6)) == pytest.approx((2.0, 2.0))

    def test_at_eigenvector(self):
        F = build_tensor_map(F1, [3, 4, 5])
        sol = power_solve(F)
        lo, hi = collatz_wielandt_bounds(F, sol.u)
        assert lo == pytest.approx(sol.mu, rel=1e-10) and hi == pytest.approx(sol.mu, rel=1e-10)

    def test_rejects_nonpositive(self):
        F = build_tensor_map(all_ones(), [3, 3, 3])
        with pytest.raises(ValueError):
            collatz_wielandt_bounds(F, np.r_[0.0, np.ones(5)])

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds)
    def test_any_positive_point_brackets_mu(self, seed):
        rng = np.random.default_rng(seed)
        F = random_primitive_instance(rng, "tensor" if rng.random() < 0.5 else "poly")
        mu = power_solve(F).mu
        lo, hi = collatz_wielandt_bounds(F, rng.uniform(0.01, 10.0, F.n))
        assert lo <= mu * (1 + 1e-12) and mu <= hi * (1 + 1e-12)


class TestBlockNormalize:
    def test_all_ones(self):
        T, w = all_ones(), NormWeights([3, 3, 3])
        sol = block_normalize(power_solve(build_tensor_map(T, w)), T, w)
        for b in sol.blocks:
            np.testing.assert_allclose(b, 2 ** (-1 / 3), rtol=1e-12)
        assert sol.lam == pytest.approx(4.0, rel=1e-12)
        assert evaluate_form(T, sol.x) == pytest.approx(4.0, rel=1e-12)
        assert sol.system_residual <= 1e-10

    def test_f1_and_idempotence(self):
        T, w = F1, NormWeights([3, 3, 3])
        once = block_normalize(power_solve(build_tensor_map(T, w)), T, w)
        twice = block_normalize(once, T, w)
        assert once.lam == pytest.approx(1.8, rel=1e-10)
        np.testing.assert_array_equal(once.x, twice.x)
        assert once.lam == twice.lam

    def test_form_equals_lambda_at_unit_norms(self):
        T, w = F1, NormWeights([3, 4, 5])
        sol = block_normalize(power_solve(build_tensor_map(T, w)), T, w)
        assert evaluate_form(T, sol.x) == pytest.approx(sol.lam, rel=1e-10)
        for b, p in zip(sol.blocks, w.p):
            assert np.sum(b ** p) ** (1 / p) == pytest.approx(1.0, abs=1e-12)

    def test_errors(self):
        T, w = F1, NormWeights([3, 3, 3])
        sol = power_solve(build_tensor_map(T, w))
        with pytest.raises(DimensionError):
            block_normalize(sol, all_ones(3, 3), NormWeights([3, 3, 3]))
        from dataclasses import replace

        zero = replace(sol, u=np.r_[0.0, 0.0, sol.u[2:]])
        with pytest.raises(ValueError):
            block_normalize(zero, T, w)


def block_rows(result, dims=(2, 2, 2)):
    return [np.split(s.x, np.cumsum(dims)[:-1]) for s in result]


class TestMultiStart:
    def test_f1_p3_unique(self):
        res = multi_start_solve(build_tensor_map(F1, [3, 3, 3]), SolverConfig(starts=100, seed=1))
        assert len(res) == 1
        np.testing.assert_allclose(res[0].x, CUBE_ROOT_HALF, atol=1e-8)

    def test_f1_p2_three_solutions(self):
        res = multi_start_solve(build_tensor_map(F1, [2, 2, 2]), SolverConfig(starts=100, damping=0.5, seed=0))
        assert len(res) == 3
        firsts = sorted(tuple(np.round(b[0], 4)) for b in block_rows(res))
        assert firsts[0] == pytest.approx((0.3568, 0.9342), abs=5e-4)
        assert firsts[1] == pytest.approx((0.7071, 0.7071), abs=5e-4)
        assert firsts[2] == pytest.approx((0.9342, 0.3568), abs=5e-4)
        # blocks of each solution coincide by symmetry of F1
        for blocks in block_rows(res):
            np.testing.assert_allclose(blocks[1], blocks[0], atol=1e-8)

    def test_random_starts_miss_the_symmetric_saddle(self):
        cfg = SolverConfig(starts=100, damping=0.5, seed=0, uniform_start=False)
        assert len(multi_start_solve(build_tensor_map(F1, [2, 2, 2]), cfg)) == 2

    def test_solutions_verify_and_are_sorted(self):
        T, w = F1, NormWeights([2, 2, 2])
        res = multi_start_solve(build_tensor_map(T, w), SolverConfig(starts=50))
        keys = [tuple(np.round(s.x, 9)) for s in res]
        assert keys == sorted(keys)
        for s in res:
            assert verify_solution((T, w), s.x, s.lam, tol=1e-8).passed
            assert np.all(s.x > 0)
        summary = res.summary()
        assert summary["starts"] == 51 and summary["distinct"] == 3

    def test_deterministic(self):
        F = build_tensor_map(F1, [2, 2, 2])
        cfg = SolverConfig(starts=20, seed=11)
        a, b = multi_start_solve(F, cfg), multi_start_solve(F, cfg)
        assert len(a) == len(b)
        for s, t in zip(a, b):
            np.testing.assert_array_equal(s.x, t.x)

    def test_failures_reported(self):
        # the uniform start is already a fixed point; the random ones need more steps
        res = multi_start_solve(build_tensor_map(F1, [2, 2, 2]), SolverConfig(starts=5, max_iter=2))
        assert len(res) == 1 and res.n_failed == 5
        assert res.summary()["failed"] == {"max_iter reached": 5}
        assert [label for label, _ in res.failures] == [0, 1, 2, 3, 4]

    def test_polymap_search(self):
        P = PolynomialMap(2, [[((1, 1), 1.0), ((2, 0), 1.0)], [((0, 2), 2.0), ((1, 1), 1.0)]])
        F = build_poly_map(P)
        res = multi_start_solve(F, SolverConfig(starts=20))
        assert len(res) == 1
        assert res[0].lam == pytest.approx(power_solve(F).lam, rel=1e-9)
        assert verify_solution(F, res[0].x, res[0].lam, tol=1e-8).passed

    def test_boundary_exclusion_for_irreducible_tensors(self):
        rng = np.random.default_rng(21)
        checked = 0
        while checked < 15:
            T = random_sparse_tensor(rng, max_total=8)
            if not is_irreducible_tensor(T).holds:
                continue
            try:
                F = build_tensor_map(T, NormWeights.uniform(T.d, T.d))
            except VanishingSliceError:
                continue
            res = multi_start_solve(F, SolverConfig(starts=10, seed=checked))
            assert len(res) == 1
            assert np.all(res[0].x > 0)
            assert verify_solution((T, F.w), res[0].x, res[0].lam, tol=1e-8).passed
            checked += 1


class TestVerifySolution:
    def test_matrix_a_printed_solutions(self):
        T = NonnegTensor.from_dense(MATRIX_A)
        for x, y in MATRIX_A_P15_PRINTED:
            rep = verify_solution((T, [1.5, 1.5]), [np.array(x), np.array(y)])
            assert rep.residual <= 5e-4
            assert max(rep.norm_deviations) <= 5e-4

    def test_exact_uniform_solution(self):
        x = np.full(6, 2 ** (-1 / 3))
        rep = verify_solution((all_ones(), [3, 3, 3]), x, lam=4.0, tol=1e-12)
        assert rep.passed and rep.residual <= 1e-12

    def test_least_squares_lambda(self):
        x = np.full(6, 2 ** (-1 / 3))
        assert verify_solution((all_ones(), [3]), x).lam == pytest.approx(4.0, rel=1e-12)

    def test_perturbation_detected(self):
        sol = power_solve(build_tensor_map(F1, [3, 3, 3]))
        x = sol.x.copy()
        x[0] += 0.05
        assert verify_solution((F1, [3, 3, 3]), x, sol.lam).residual > 1e-3

    def test_boundary_point_allowed(self):
        # e_1 (x) e_1 is a critical point of the diagonal form
        T = NonnegTensor((2, 2), [((0, 0), 1.0), ((1, 1), 1.0)])
        rep = verify_solution((T, [2, 2]), np.array([1.0, 0.0, 1.0, 0.0]), lam=1.0, tol=1e-14)
        assert rep.passed

    def test_polynomial_system(self):
        F = build_poly_map(SWAP, [2, 2], p=2, a=1.0)
        x = np.full(2, 2 ** -0.5)
        rep = verify_solution(F, x, tol=1e-12)
        assert rep.passed and rep.lam == pytest.approx(2 ** 0.5)
        assert verify_solution((SWAP, [2, 2], 2.0, 1.0), x, tol=1e-12).passed

    def test_errors(self):
        with pytest.raises(DimensionError):
            verify_solution((all_ones(), [3, 3, 3]), np.ones(5))
        with pytest.raises(DimensionError):
            verify_solution((all_ones(), [3, 3]), np.ones(6))
        with pytest.raises(ValueError):
            verify_solution((all_ones(), [3, 3, 3]), -np.ones(6))
        with pytest.raises(TypeError):
            verify_solution("nonsense", np.ones(6))


class TestComplexEigenpair:
    @pytest.mark.parametrize("v, nu", [((1, 1j), -1), ((1, -1), 1)])
    def test_swap_squares_pairs(self, v, nu):
        chk = verify_complex_eigenpair(SWAP_SQUARES, v, nu)
        assert chk.residual <= 1e-12
        assert chk.modulus == pytest.approx(1.0)
        assert chk.lam == pytest.approx(1.0, rel=1e-9)
        assert chk.bound_ok

    def test_real_perron_pair(self):
        P = PolynomialMap(2, [[((1, 1), 1.0), ((2, 0), 1.0)], [((0, 2), 2.0), ((1, 1), 1.0)]])
        sol = power_solve(build_poly_map(P), SolverConfig(tol=1e-13))
        chk = verify_complex_eigenpair(P, sol.x, sol.lam, lam=sol.lam)
        assert chk.residual <= 1e-12
        assert chk.bound_ok and chk.modulus == pytest.approx(chk.lam)

    def test_bound_violation_reported(self):
        chk = verify_complex_eigenpair(SWAP_SQUARES, (1, 1j), -1, lam=0.5)
        assert not chk.bound_ok

    def test_errors(self):
        with pytest.raises(DegreeError):
            verify_complex_eigenpair(PolynomialMap(2, [[((1, 1), 1.0)], [((1, 0), 1.0)]]), (1, 1), 1)
        with pytest.raises(DimensionError):
            verify_complex_eigenpair(SWAP_SQUARES, (1, 1, 1), 1)
        with pytest.raises(ValueError):
            verify_complex_eigenpair(SWAP_SQUARES, (0, 0), 1)


def test_override_is_silent_for_primitive_maps():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        power_solve(build_tensor_map(F1, [3, 3, 3]), SolverConfig(allow_nonprimitive=True))

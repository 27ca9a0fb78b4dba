#!/usr/bin/env python3
"""
Test suite for robust (sliced) Wasserstein registration
"""
import logging
import math
import re

import numpy as np
import pandas as pd
import pytest
from scipy import sparse

from src.eigenmap import Embedding, multiscale_embed
from src.exceptions import DegenerateInput, DimensionMismatch, SizeLimitExceeded
from src.geometry import permute_shape
from src.laplace import assemble_cotan, solve_spectrum
from src.register import (
    CurvilinearConfig, DirectionSet, LevelSpec, OrthogonalMatrix, cayley, cold_start, curvilinear_search,
    default_direction_count, empirical_register, gradient, multiscale_register, procrustes, rswd_distance,
    rswd_eval, rswd_register_alternating, rwd_distance, rwd_register, seed_rotation, sign_flips,
    signed_permutations, skew, sliced_distance, sliced_plans, standard_schedule, write_result,
)
from src.transport import TransportPlan, ot_exact, plan_energy, squared_distances
from tests.helpers import random_embedding, random_signed_permutation, small_rotation


def frozen_energy(P: Embedding, Q: Embedding, R: np.ndarray, dirs: DirectionSet, plans) -> float:
    """E_Θ(R) evaluated directly from the stored per-direction couplings."""
    theta = dirs.directions
    x = (P.matrix @ R @ theta.T)[plans.rows, plans.direction]
    y = (Q.matrix @ theta.T)[plans.cols, plans.direction]
    return float(np.sum(plans.weights * (x - y) ** 2) / dirs.count)


def random_orthogonal(rng, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class TestValueTypes:
    """Test OrthogonalMatrix, DirectionSet and schedule helpers."""

    def test_orthogonal_matrix_validation(self):
        assert OrthogonalMatrix.identity(3).n == 3
        OrthogonalMatrix(np.diag([1.0, -1.0]))
        with pytest.raises(DegenerateInput):
            OrthogonalMatrix(np.array([[1.0, 0.1], [0.0, 1.0]]))
        with pytest.raises(DimensionMismatch):
            OrthogonalMatrix(np.zeros((2, 3)))

    def test_embedded_block(self):
        R = OrthogonalMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        big = R.embedded(4).entries
        np.testing.assert_array_equal(big[:2, :2], R.entries)
        np.testing.assert_array_equal(big[2:, 2:], np.eye(2))
        with pytest.raises(DimensionMismatch):
            R.embedded(1)

    def test_directions_are_unit_and_reproducible(self):
        a = DirectionSet.generate(100, 4, seed=7)
        b = DirectionSet.generate(100, 4, seed=7)
        np.testing.assert_allclose(np.linalg.norm(a.directions, axis=1), 1.0, atol=1e-12)
        assert a.directions.tobytes() == b.directions.tobytes()
        assert a.head(10).count == 10
        assert not np.array_equal(a.directions, DirectionSet.generate(100, 4, seed=8).directions)

    def test_default_direction_counts(self):
        assert default_direction_count(5) == 1000
        assert default_direction_count(7) == 1500
        assert default_direction_count(50) == 5000
        assert default_direction_count(60) == 5000
        assert default_direction_count(3, "multiscale") == 500
        assert default_direction_count(200, "multiscale") == 20000
        assert default_direction_count(250, "multiscale") == 20000

    def test_standard_schedule(self):
        schedule = standard_schedule()
        assert [level.n for level in schedule] == [3, 5, 10, 20, 30, 50, 80, 120, 150, 200]
        assert all(level.iterations == 2 and level.method == "empirical" for level in schedule)
        assert schedule[1].direction_count == 500

    def test_level_spec_method(self):
        with pytest.raises(DegenerateInput):
            LevelSpec(3, method="sinkhorn")

    def test_curvilinear_config_validation(self):
        with pytest.raises(DegenerateInput):
            CurvilinearConfig(delta=1.5)


class TestProcrustes:
    """Test the closed-form R-step."""

    def test_recovers_rotation_from_matching_plan(self, rng):
        P = random_embedding(rng, 12, 4)
        R0 = random_orthogonal(rng, 4)
        Q = P.transformed(R0)
        plan = TransportPlan(sparse.diags(P.measure).tocsr(), P.measure, Q.measure)
        np.testing.assert_allclose(procrustes(P, Q, plan).entries, R0, atol=1e-10)

    def test_no_orthogonal_matrix_does_better(self, rng):
        """Test the closed form beats 100 random orthogonal matrices on a fixed plan."""
        P, Q = random_embedding(rng, 12, 3, weighted=True), random_embedding(rng, 10, 3, weighted=True)
        plan, _ = ot_exact(squared_distances(P.matrix, Q.matrix), P.measure, Q.measure)
        R = procrustes(P, Q, plan).entries
        best = plan_energy(P.matrix, Q.matrix, R, plan)
        for _ in range(100):
            other = random_orthogonal(rng, 3)
            assert best <= plan_energy(P.matrix, Q.matrix, other, plan) + 1e-12

    def test_plan_shape_checked(self, rng):
        P, Q = random_embedding(rng, 5, 2), random_embedding(rng, 6, 2)
        plan = TransportPlan(sparse.diags(P.measure).tocsr(), P.measure, P.measure)
        with pytest.raises(DimensionMismatch):
            procrustes(P, Q, plan)


class TestGradientAndCayley:
    """Test the frozen-plan objective, its gradient and the Cayley curve."""

    def test_gradient_matches_central_differences(self):
        """Test H against central differences along random tangent directions."""
        for seed in range(10):
            rng = np.random.default_rng(seed)
            n = 2 + seed % 4
            P, Q = random_embedding(rng, 15, n, weighted=True), random_embedding(rng, 12, n, weighted=True)
            dirs = DirectionSet.generate(40, n, seed)
            R = random_orthogonal(rng, n)
            plans = sliced_plans(P, Q, R, dirs)
            H = gradient(P, Q, R, dirs, plans)
            for _ in range(20):
                S = rng.standard_normal((n, n))
                xi = (S - S.T) @ R
                eps = 1e-5
                fd = (frozen_energy(P, Q, R + eps * xi, dirs, plans)
                      - frozen_energy(P, Q, R - eps * xi, dirs, plans)) / (2 * eps)
                exact = float(np.sum(H * xi))
                assert abs(fd - exact) <= 1e-6 * max(np.linalg.norm(H) * np.linalg.norm(xi), 1e-12)

    def test_gradient_accepts_plan_list(self, rng):
        P, Q = random_embedding(rng, 8, 3), random_embedding(rng, 8, 3)
        dirs = DirectionSet.generate(5, 3)
        plans = sliced_plans(P, Q, np.eye(3), dirs)
        np.testing.assert_allclose(gradient(P, Q, np.eye(3), dirs, plans.as_plans()),
                                   gradient(P, Q, np.eye(3), dirs, plans), rtol=1e-12, atol=1e-12)

    def test_cayley_stays_orthogonal(self, rng):
        R = random_orthogonal(rng, 4)
        A = skew(rng.standard_normal((4, 4)), R)
        np.testing.assert_allclose(A, -A.T)
        for tau in (0.0, 0.1, 10.0):
            Y = cayley(R, A, tau).entries
            np.testing.assert_allclose(Y @ Y.T, np.eye(4), atol=1e-12)
        np.testing.assert_allclose(cayley(R, A, 0.0).entries, R)

    def test_curvilinear_search_decreases_frozen_energy(self, rng):
        P, Q = random_embedding(rng, 20, 3), random_embedding(rng, 20, 3)
        dirs = DirectionSet.generate(30, 3, 1)
        plans = sliced_plans(P, Q, np.eye(3), dirs)
        R = curvilinear_search(P, Q, dirs, plans, np.eye(3)).entries
        assert frozen_energy(P, Q, R, dirs, plans) <= frozen_energy(P, Q, np.eye(3), dirs, plans)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-10)

    def test_curvilinear_search_reaches_rotation_with_true_plans(self, rng):
        """Test frozen plans taken at the true rotation pull the search onto it."""
        P = random_embedding(rng, 40, 3)
        R_true = small_rotation(rng, 3, 1.0)
        Q = P.transformed(R_true)
        dirs = DirectionSet.generate(100, 3, 4)
        plans = sliced_plans(P, Q, R_true, dirs)
        config = CurvilinearConfig(epsilon=1e-10, max_inner=500)
        R = curvilinear_search(P, Q, dirs, plans, np.eye(3), config).entries
        assert frozen_energy(P, Q, R, dirs, plans) <= 1e-12
        np.testing.assert_allclose(R, R_true, atol=1e-5)

    def test_curvilinear_search_reaches_sign_flip_with_true_plans(self, rng):
        """Test a start with det = -1 is pulled onto diag(1, -1, 1) by its monotone couplings."""
        P = random_embedding(rng, 40, 3)
        flip = np.diag([1.0, -1.0, 1.0])
        Q = P.transformed(flip)
        dirs = DirectionSet.generate(100, 3, 6)
        plans = sliced_plans(P, Q, flip, dirs)
        start = flip @ small_rotation(rng, 3, 1.0)
        config = CurvilinearConfig(epsilon=1e-10, max_inner=500)
        R = curvilinear_search(P, Q, dirs, plans, start, config).entries
        assert frozen_energy(P, Q, R, dirs, plans) <= 1e-12
        np.testing.assert_allclose(R, flip, atol=1e-5)


class TestStartingPoints:
    """Test the cold start and the opt-in discrete initialization."""

    def test_cold_start_is_identity(self, rng):
        P, Q = random_embedding(rng, 20, 3), random_embedding(rng, 25, 3)
        np.testing.assert_array_equal(cold_start(P, Q).entries, np.eye(3))
        np.testing.assert_array_equal(cold_start(P, Q, DirectionSet.generate(10, 3)).entries, np.eye(3))

    def test_cold_start_uses_the_product_coupling_in_one_dimension(self):
        """Test n = 1, where Procrustes on μ^P (μ^Q)ᵀ is unique, picks the sign of the means."""
        P = Embedding.from_points([[1.0], [3.0]])
        Q = Embedding.from_points([[-2.0], [-1.0], [-4.0]])
        np.testing.assert_array_equal(cold_start(P, Q).entries, [[-1.0]])
        centered = Embedding.from_points([[-1.0], [1.0]])
        np.testing.assert_array_equal(cold_start(centered, Q).entries, [[1.0]])

    def test_discrete_init_is_opt_in(self, rng):
        P = random_embedding(rng, 30, 4)
        R0 = random_signed_permutation(rng, 4)
        Q = P.transformed(R0)
        dirs = DirectionSet.generate(32, 4)
        np.testing.assert_array_equal(cold_start(P, Q, dirs, discrete_init=True).entries, R0)
        np.testing.assert_array_equal(cold_start(P, Q, dirs).entries, np.eye(4))

    def test_candidate_sets(self):
        perms = list(signed_permutations(3))
        assert len(perms) == 48
        np.testing.assert_array_equal(perms[0], np.eye(3))
        flips = list(sign_flips(3))
        assert len(flips) == 8
        np.testing.assert_array_equal(flips[0], np.eye(3))

    def test_recovers_signed_permutation(self, rng):
        P = random_embedding(rng, 30, 4)
        R0 = random_signed_permutation(rng, 4)
        Q = P.transformed(R0)
        np.testing.assert_array_equal(seed_rotation(P, Q, DirectionSet.generate(32, 4)).entries, R0)

    def test_sign_flips_only_in_higher_dimension(self, rng):
        P = random_embedding(rng, 30, 6)
        flip = np.diag([1.0, -1.0, 1.0, -1.0, -1.0, 1.0])
        Q = P.transformed(flip)
        np.testing.assert_array_equal(seed_rotation(P, Q, DirectionSet.generate(32, 6)).entries, flip)


class TestRegistration:
    """Test the three registration algorithms."""

    def test_rwd_recovers_signed_permutation(self, rng):
        P = random_embedding(rng, 15, 3)
        R0 = random_signed_permutation(rng, 3)
        result = rwd_register(P, P.transformed(R0), discrete_init=True)
        assert result.energy <= 1e-20
        np.testing.assert_allclose(result.rotation.entries, R0, atol=1e-10)
        np.testing.assert_array_equal(result.correspondence.assignment, np.arange(15))

    def test_rwd_single_coordinate_example(self):
        """Test P = {2}, Q = {-2} in one dimension gives R = -1 with zero energy."""
        P, Q = Embedding.from_points([[2.0]]), Embedding.from_points([[-2.0]])
        result = rwd_register(P, Q)
        np.testing.assert_array_equal(result.rotation.entries, [[-1.0]])
        assert result.energy == 0.0

    def test_reflection_needs_discrete_init(self, rng):
        """Test the Cayley curve keeps det R = +1 from the identity start."""
        P = random_embedding(rng, 30, 3)
        Q = P.transformed(np.diag([1.0, 1.0, -1.0]))
        dirs = DirectionSet.generate(200, 3, 2)
        cold = rswd_register_alternating(P, Q, dirs)
        seeded = rswd_register_alternating(P, Q, dirs, discrete_init=True)
        assert np.linalg.det(cold.rotation.entries) == pytest.approx(1.0)
        assert np.linalg.det(seeded.rotation.entries) == pytest.approx(-1.0)
        assert seeded.energy < cold.energy

    def test_alternating_undoes_sign_flip(self, rng):
        P = random_embedding(rng, 40, 5)
        flip = np.diag([1.0, -1.0, 1.0, 1.0, 1.0])
        Q = P.transformed(flip)
        dirs = DirectionSet.generate(1000, 5, 1)
        initial, _ = rswd_eval(P, Q, np.eye(5), dirs)
        result = rswd_register_alternating(P, Q, dirs, discrete_init=True)
        assert result.energy <= 1e-8 * initial
        np.testing.assert_allclose(result.rotation.entries, flip, atol=1e-3)

    @pytest.mark.slow
    def test_empirical_agrees_with_exact(self):
        """Test the averaged-plan correspondence matches the exact one on separated points."""
        rng = np.random.default_rng(21)
        P = random_embedding(rng, 60, 3)
        permutation = rng.permutation(60)
        R0 = random_signed_permutation(rng, 3)
        noisy = P.matrix @ R0 + 0.01 * rng.standard_normal((60, 3))
        Q = Embedding.from_points(noisy).permuted(permutation)
        exact = rwd_register(P, Q, discrete_init=True)
        empirical = empirical_register(P, Q, DirectionSet.generate(500, 3, 4), discrete_init=True)
        agreement = np.mean(empirical.correspondence.assignment == exact.correspondence.assignment)
        assert agreement >= 0.95
        assert np.mean(exact.correspondence.assignment == permutation) >= 0.95

    def test_rwd_with_initial_plan(self, rng):
        P = random_embedding(rng, 10, 3)
        R0 = random_orthogonal(rng, 3)
        identity_plan = TransportPlan(sparse.diags(P.measure).tocsr(), P.measure, P.measure)
        result = rwd_register(P, P.transformed(R0), init_plan=identity_plan)
        np.testing.assert_allclose(result.rotation.entries, R0, atol=1e-10)

    def test_rwd_size_guard(self, rng):
        P = random_embedding(rng, 10, 2)
        with pytest.raises(SizeLimitExceeded):
            rwd_register(P, P, max_size=50)

    def test_alternating_recovers_signed_permutation(self, rng):
        P = random_embedding(rng, 40, 5)
        R0 = random_signed_permutation(rng, 5)
        Q = P.transformed(R0)
        dirs = DirectionSet.generate(1000, 5, 3)
        initial, _ = rswd_eval(P, Q, np.eye(5), dirs)
        result = rswd_register_alternating(P, Q, dirs, discrete_init=True)
        assert result.energy <= 1e-6 * initial
        assert np.linalg.norm(result.rotation.entries - R0) <= 1e-2

    def test_alternating_refines_small_rotation(self):
        """Test the Cayley search walks from the identity to a nearby rotation."""
        rng = np.random.default_rng(11)
        P = random_embedding(rng, 60, 3)
        R0 = small_rotation(rng, 3, 0.15)
        Q = P.transformed(R0)
        dirs = DirectionSet.generate(200, 3, 0)
        result = rswd_register_alternating(P, Q, dirs, init_R=np.eye(3))
        assert result.energy <= 1e-2 * result.energy_trace[0]
        assert np.linalg.norm(result.rotation.entries - R0) <= 0.05

    def test_empirical_recovers_signed_permutation(self, rng):
        P = random_embedding(rng, 40, 5)
        R0 = random_signed_permutation(rng, 5)
        Q = P.transformed(R0)
        dirs = DirectionSet.generate(1000, 5, 3)
        initial, _ = rswd_eval(P, Q, np.eye(5), dirs)
        result = empirical_register(P, Q, dirs, discrete_init=True)
        assert result.energy <= 1e-6 * initial
        assert np.linalg.norm(result.rotation.entries - R0) <= 1e-2

    def test_empirical_warm_plan_starts_with_procrustes(self, rng):
        P = random_embedding(rng, 20, 3)
        R0 = random_orthogonal(rng, 3)
        identity_plan = TransportPlan(sparse.diags(P.measure).tocsr(), P.measure, P.measure)
        result = empirical_register(P, P.transformed(R0), DirectionSet.generate(50, 3), max_iter=1,
                                    init_plan=identity_plan)
        np.testing.assert_allclose(result.rotation.entries, R0, atol=1e-10)
        assert result.energy <= 1e-20

    def test_empirical_needs_an_iteration(self, rng):
        P = random_embedding(rng, 5, 2)
        with pytest.raises(DegenerateInput):
            empirical_register(P, P, DirectionSet.generate(4, 2), max_iter=0)

    def test_dimension_mismatch(self, rng):
        P, Q = random_embedding(rng, 5, 2), random_embedding(rng, 5, 3)
        with pytest.raises(DimensionMismatch):
            rswd_eval(P, Q, np.eye(2), DirectionSet.generate(4, 2))
        with pytest.raises(DimensionMismatch):
            rswd_eval(P, P, np.eye(2), DirectionSet.generate(4, 3))


class TestMonotonicity:
    """Test energy traces never increase and the rejection guard only sees rounding."""

    @staticmethod
    def _rejected_increases(caplog):
        """Relative increase of every candidate a guard turned away."""
        increases = []
        for record in caplog.records:
            match = re.search(r"rejected \(([^ ]+) > ([^ ]+)\)", record.getMessage())
            if match:
                candidate, current = float(match.group(1)), float(match.group(2))
                increases.append((candidate - current) / max(abs(current), 1e-300))
        return increases

    @pytest.mark.slow
    def test_rwd_traces_non_increasing(self, caplog):
        with caplog.at_level(logging.DEBUG, logger="SpectralReg.Register"):
            for seed in range(50):
                rng = np.random.default_rng(seed)
                P, Q = random_embedding(rng, 12, 3, weighted=True), random_embedding(rng, 10, 3, weighted=True)
                trace = rwd_register(P, Q, init_R=random_orthogonal(rng, 3)).energy_trace
                assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:])), f"seed {seed}"
        assert all(increase <= 1e-9 for increase in self._rejected_increases(caplog))

    @pytest.mark.slow
    def test_alternating_traces_non_increasing(self, caplog):
        with caplog.at_level(logging.DEBUG, logger="SpectralReg.Register"):
            for seed in range(50):
                rng = np.random.default_rng(seed)
                P, Q = random_embedding(rng, 15, 3, weighted=True), random_embedding(rng, 15, 3, weighted=True)
                dirs = DirectionSet.generate(50, 3, seed)
                trace = rswd_register_alternating(P, Q, dirs, init_R=random_orthogonal(rng, 3)).energy_trace
                assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:])), f"seed {seed}"
        assert all(increase <= 1e-9 for increase in self._rejected_increases(caplog))


class TestDistances:
    """Test the distance estimates."""

    def test_sliced_distance_of_identical_sets_is_zero(self, rng):
        P = random_embedding(rng, 10, 3)
        assert sliced_distance(P, P, DirectionSet.generate(20, 3)) == 0.0

    def test_rswd_invariant_under_relabeling_and_equivalence(self, rng):
        """Test the fixed-R value ignores row order and equals the pre-rotated evaluation."""
        P, Q = random_embedding(rng, 9, 3, weighted=True), random_embedding(rng, 7, 3, weighted=True)
        dirs = DirectionSet.generate(25, 3, 2)
        R = random_orthogonal(rng, 3)
        value, _ = rswd_eval(P, Q, R, dirs)
        shuffled, _ = rswd_eval(P.permuted(rng.permutation(9)), Q.permuted(rng.permutation(7)), R, dirs)
        rotated, _ = rswd_eval(P.transformed(R), Q, np.eye(3), dirs)
        assert shuffled == pytest.approx(value, rel=1e-12)
        assert rotated == pytest.approx(value, rel=1e-12)

    def test_rswd_distance_of_reflected_copy(self, rng):
        P = random_embedding(rng, 20, 3)
        dirs = DirectionSet.generate(100, 3)
        value, result = rswd_distance(P, P.transformed(np.diag([1.0, -1.0, 1.0])), dirs, discrete_init=True)
        assert value <= 1e-8
        assert result.rotation.n == 3

    def test_permuted_rotated_copy_has_zero_distance(self):
        rng = np.random.default_rng(17)
        P = random_embedding(rng, 15, 3)
        rotation = random_signed_permutation(rng, 3) @ small_rotation(rng, 3, 0.2)
        Q = P.permuted(rng.permutation(15)).transformed(rotation)
        exact, _ = rwd_distance(P, Q)
        sliced, _ = rswd_distance(P, Q, DirectionSet.generate(200, 3, 4),
                                  CurvilinearConfig(epsilon=1e-10, max_inner=300), discrete_init=True)
        assert exact <= 1e-6
        assert sliced <= 1e-6

    @pytest.mark.slow
    @pytest.mark.integration
    def test_rwd_metric_axioms(self):
        """Test symmetry and the triangle inequality on random triples in the plane."""
        angles = np.linspace(0.0, 2.0 * math.pi, 36, endpoint=False)
        rotations = [np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]]) for a in angles]
        starts = rotations + [R @ np.diag([1.0, -1.0]) for R in rotations]
        for seed in range(100):
            rng = np.random.default_rng(seed)
            A, B, C = (random_embedding(rng, 6, 2) for _ in range(3))
            ab, _ = rwd_distance(A, B, starts)
            ba, _ = rwd_distance(B, A, starts)
            bc, _ = rwd_distance(B, C, starts)
            ac, _ = rwd_distance(A, C, starts)
            assert abs(ab - ba) <= 1e-6, f"seed {seed}"
            assert ac <= ab + bc + 1e-6, f"seed {seed}"


class TestMultiscale:
    """Test the coarse-to-fine driver."""

    @pytest.fixture(scope="class")
    def permuted_pair(self, bumpy_sphere):
        permutation = np.random.default_rng(5).permutation(bumpy_sphere.size)
        target = permute_shape(bumpy_sphere, permutation)
        schedule = [3, 5, 10]
        P_levels = multiscale_embed(solve_spectrum(assemble_cotan(bumpy_sphere), 10), bumpy_sphere, schedule)
        Q_levels = multiscale_embed(solve_spectrum(assemble_cotan(target), 10), target, schedule)
        return bumpy_sphere, target, permutation, P_levels, Q_levels

    def test_reports_and_quality(self, permuted_pair):
        source, target, permutation, P_levels, Q_levels = permuted_pair
        specs = [LevelSpec(n, 200, 2, "empirical") for n in (3, 5, 10)]
        result = multiscale_register(P_levels, Q_levels, specs, seed=1, source=source, target=target)
        assert [r.n for r in result.scale_reports] == [3, 5, 10]
        assert all(r.directions == 200 for r in result.scale_reports)
        assert all(r.final_energy <= r.initial_energy + 1e-12 for r in result.scale_reports)
        assert result.scale_reports[-1].quality >= 0.95
        assert np.mean(result.correspondence.assignment == permutation) >= 0.9
        assert result.rotation.n == 10

    def test_alternating_method(self, permuted_pair):
        _, _, permutation, P_levels, Q_levels = permuted_pair
        specs = [LevelSpec(n, 200, 2, "alternating") for n in (3, 5, 10)]
        result = multiscale_register(P_levels, Q_levels, specs, seed=1)
        assert result.scale_reports[-1].quality is None
        assert np.mean(result.correspondence.assignment == permutation) >= 0.9

    @pytest.mark.slow
    def test_warm_start_is_no_worse_than_cold(self, permuted_pair):
        """Test each later level starts within 1.5x of a cold start on the same level."""
        _, _, _, P_levels, Q_levels = permuted_pair
        specs = [LevelSpec(n, 200, 2, "empirical") for n in (3, 5, 10)]
        for seed in range(20):
            reports = multiscale_register(P_levels, Q_levels, specs, seed=seed).scale_reports
            for j in (1, 2):
                dirs = DirectionSet.generate(200, specs[j].n, seed + j)
                cold = empirical_register(P_levels[j], Q_levels[j], dirs, max_iter=1).energy
                assert reports[j].initial_energy <= 1.5 * cold + 1e-12, f"seed {seed}, level {j}"

    def test_exact_method_respects_guard(self, permuted_pair):
        _, _, _, P_levels, Q_levels = permuted_pair
        specs = [LevelSpec(n, None, 1, "exact") for n in (3, 5, 10)]
        with pytest.raises(SizeLimitExceeded):
            multiscale_register(P_levels, Q_levels, specs, max_size=1000)

    def test_schedule_mismatch(self, permuted_pair):
        _, _, _, P_levels, Q_levels = permuted_pair
        with pytest.raises(DegenerateInput):
            multiscale_register(P_levels, Q_levels, [LevelSpec(3), LevelSpec(5)])
        with pytest.raises(DegenerateInput):
            multiscale_register(P_levels, Q_levels, [LevelSpec(3), LevelSpec(6), LevelSpec(10)])

    def test_write_result(self, tmp_path, permuted_pair):
        _, _, _, P_levels, Q_levels = permuted_pair
        specs = [LevelSpec(n, 100, 1, "empirical") for n in (3, 5, 10)]
        result = multiscale_register(P_levels, Q_levels, specs)
        paths = write_result(result, tmp_path)
        assert set(paths) == {"rotation.csv", "plan.csv", "plan_marginals.csv", "correspondence.csv",
                              "energy_trace.csv", "levels.csv"}
        rotation = pd.read_csv(paths["rotation.csv"], header=None).to_numpy()
        np.testing.assert_array_equal(rotation, result.rotation.entries)
        levels = pd.read_csv(paths["levels.csv"])
        assert list(levels["n"]) == [3, 5, 10]

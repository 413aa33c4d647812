import numpy as np
import pytest

from kalsel import matrices, system
from kalsel.errors import (
    DetectabilityError,
    DimensionError,
    DomainError,
    InvalidInputError,
    SimplexError,
)
from kalsel.system import (
    CandidateSensor,
    LtiSystem,
    Partitioning,
    Selection,
    SensorPool,
    assemble_output,
    augment_selection,
    check_detectability_conditions,
    check_simplex,
    expected_information,
    pbh_detectable,
    selection_information,
)


def make_pool(rng, n_c, m, sigma2=1.0):
    return SensorPool.from_arrays(rng.uniform(size=(n_c, m)), np.full(n_c, sigma2))


class TestLtiSystem:
    def test_valid(self):
        sys = LtiSystem(A=0.5 * np.eye(2), Q=0.5 * np.eye(2))
        assert sys.m == 2

    def test_rejects_indefinite_noise(self):
        with pytest.raises(InvalidInputError):
            LtiSystem(A=np.eye(2), Q=np.diag([1.0, 0.0]))

    def test_rejects_nonsquare(self):
        with pytest.raises(DimensionError):
            LtiSystem(A=np.ones((2, 3)), Q=np.eye(2))
        with pytest.raises(DimensionError):
            LtiSystem(A=np.eye(3), Q=np.eye(2))


class TestPool:
    def test_information_matrices(self):
        pool = SensorPool.from_arrays(np.array([[1.0, 0.0], [1.0, 1.0]]), [1.0, 2.0])
        assert pool.n_c == 2 and pool.m == 2
        assert np.allclose(pool.info_matrix(1), np.diag([1.0, 0.0]))
        assert np.allclose(pool.info_matrix(2), 0.5 * np.ones((2, 2)))
        for z in pool.information:
            assert matrices.is_psd(z)
            assert np.linalg.matrix_rank(z) <= 1

    def test_duplicate_pair_rejected(self):
        with pytest.raises(InvalidInputError):
            SensorPool.from_arrays(np.array([[1.0, 0.0], [1.0, 0.0]]), [1.0, 1.0])
        # Same row with a different variance is a different candidate.
        pool = SensorPool.from_arrays(np.array([[1.0, 0.0], [1.0, 0.0]]), [1.0, 2.0])
        assert pool.n_c == 2

    def test_bad_sensors(self):
        with pytest.raises(InvalidInputError):
            CandidateSensor(np.array([1.0, 0.0]), 0.0)
        with pytest.raises(InvalidInputError):
            CandidateSensor(np.array([np.inf, 0.0]), 1.0)
        with pytest.raises(DimensionError):
            SensorPool([CandidateSensor(np.ones(2), 1.0), CandidateSensor(np.ones(3), 1.0)])

    def test_index_bounds(self):
        pool = make_pool(np.random.default_rng(0), 3, 2)
        with pytest.raises(DomainError):
            pool.info_matrix(0)
        with pytest.raises(DomainError):
            pool.info_matrix(4)


class TestSelection:
    def test_kinds(self):
        Selection((1, 2, 1), kind="homogeneous")
        Selection((1,), kind="constrained", rejection_count=3)
        Selection((2, 2), kind="greedy")
        with pytest.raises(InvalidInputError):
            Selection((1,), kind="constrained")
        with pytest.raises(InvalidInputError):
            Selection((1,), kind="homogeneous", rejection_count=1)
        with pytest.raises(InvalidInputError):
            Selection((1,), kind="adaptive")
        with pytest.raises(DomainError):
            Selection((0, 1))

    def test_zero_based_view(self):
        assert list(Selection((3, 1, 2)).as_zero_based()) == [2, 0, 1]


class TestAssembleOutput:
    def test_single_unit_sensor(self):
        pool = SensorPool.from_arrays(np.array([[1.0, 0.0]]), [1.0])
        C, R = assemble_output(pool, Selection((1,)))
        assert np.array_equal(C, np.array([[1.0, 0.0]]))
        assert np.array_equal(R, np.array([[1.0]]))

    def test_repeat_doubles_information(self):
        pool = SensorPool.from_arrays(np.array([[1.0, 2.0]]), [0.5])
        sel = Selection((1, 1))
        C, R = assemble_output(pool, sel)
        info = C.T @ np.linalg.inv(R) @ C
        assert np.allclose(info, 2.0 * pool.info_matrix(1), atol=1e-12)
        assert np.allclose(selection_information(pool, sel), info, atol=1e-12)

    def test_matches_brute_force_sum(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            pool = make_pool(rng, 6, 3, sigma2=0.5)
            idx = tuple(int(i) for i in rng.integers(1, 7, size=5))
            sel = Selection(idx)
            C, R = assemble_output(pool, sel)
            via_output = C.T @ np.linalg.inv(R) @ C
            brute = sum(pool.info_matrix(j) for j in idx)
            assert np.allclose(via_output, brute, atol=1e-12)
            assert np.allclose(selection_information(pool, sel), brute, atol=1e-12)

    def test_out_of_range(self):
        pool = SensorPool.from_arrays(np.array([[1.0, 0.0]]), [1.0])
        with pytest.raises(DomainError):
            assemble_output(pool, Selection((2,)))

    def test_empty_selection(self):
        pool = SensorPool.from_arrays(np.array([[1.0, 0.0]]), [1.0])
        C, R = assemble_output(pool, Selection(()))
        assert C.shape == (0, 2) and R.shape == (0, 0)
        assert np.array_equal(selection_information(pool, Selection(())), np.zeros((2, 2)))


class TestExpectedInformation:
    def test_point_mass(self):
        pool = make_pool(np.random.default_rng(1), 4, 3)
        p = np.array([0.0, 1.0, 0.0, 0.0])
        assert np.allclose(expected_information(pool, p), pool.info_matrix(2), atol=1e-15)

    def test_orthonormal_pair_gives_scaled_identity(self):
        pool = SensorPool.from_arrays(np.eye(2), [1.0, 1.0])
        out = expected_information(pool, [0.5, 0.5])
        assert np.allclose(out, 0.5 * np.eye(2), atol=1e-15)

    def test_affine_in_distribution(self):
        rng = np.random.default_rng(2)
        pool = make_pool(rng, 5, 3)
        for _ in range(30):
            p = rng.dirichlet(np.ones(5))
            q = rng.dirichlet(np.ones(5))
            a = float(rng.uniform())
            mix = a * p + (1.0 - a) * q
            lhs = expected_information(pool, mix)
            rhs = a * expected_information(pool, p) + (1.0 - a) * expected_information(pool, q)
            assert np.allclose(lhs, rhs, atol=1e-12)

    def test_matches_monte_carlo_mean(self):
        # Independent sampling oracle: empirical mean of drawn Z matrices.
        rng = np.random.default_rng(3)
        pool = make_pool(rng, 5, 3, sigma2=0.5)
        p = rng.dirichlet(np.ones(5))
        draws = rng.choice(5, size=100_000, p=p)
        sampled = pool.information[draws]
        mc_mean = sampled.mean(axis=0)
        se = sampled.std(axis=0) / np.sqrt(draws.size)
        assert np.all(np.abs(mc_mean - expected_information(pool, p)) <= 3.0 * se + 1e-12)

    def test_simplex_validation(self):
        pool = make_pool(np.random.default_rng(4), 3, 2)
        with pytest.raises(SimplexError):
            expected_information(pool, [0.5, 0.5, 0.1])
        with pytest.raises(SimplexError):
            expected_information(pool, [1.5, -0.5, 0.0])
        with pytest.raises(SimplexError):
            expected_information(pool, [0.5, 0.5])
        with pytest.raises(SimplexError):
            check_simplex([])


class TestPbhDetectable:
    A = np.diag([2.0, 0.5])

    def test_unstable_mode_observed(self):
        assert pbh_detectable(self.A, np.array([[1.0, 0.0]]))

    def test_unstable_mode_unobserved(self):
        assert not pbh_detectable(self.A, np.array([[0.0, 1.0]]))

    def test_stable_system_vacuous(self):
        assert pbh_detectable(0.9 * np.eye(3), np.zeros((1, 3)))
        assert pbh_detectable(0.9 * np.eye(3), np.zeros((0, 3)))

    def test_marginally_stable_mode_counts(self):
        # An eigenvalue exactly on the unit circle needs observation.
        assert not pbh_detectable(np.diag([1.0, 0.5]), np.array([[0.0, 1.0]]))
        assert pbh_detectable(np.diag([1.0, 0.5]), np.array([[1.0, 0.0]]))

    def test_complex_eigenvalues(self):
        rot = 1.1 * np.array([[0.0, -1.0], [1.0, 0.0]])  # unstable spiral
        assert pbh_detectable(rot, np.array([[1.0, 0.0]]))
        assert not pbh_detectable(rot, np.zeros((1, 2)))

    def test_full_observation_always_detectable(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = rng.standard_normal((3, 3)) * 2.0
            assert pbh_detectable(a, np.eye(3))


class TestDetectabilityReport:
    sys = LtiSystem(A=np.diag([2.0, 0.5]), Q=0.5 * np.eye(2))

    def test_all_candidates_detectable(self):
        pool = SensorPool.from_arrays(np.array([[1.0, 0.0], [1.0, 1.0]]), [1.0, 1.0])
        rep = check_detectability_conditions(self.sys, pool, [1.0, 0.0])
        assert rep.per_candidate == (True, True)
        assert rep.satisfied_condition == "all-candidates"
        assert rep.mixture_detectable
        assert rep.warnings == ()

    def test_mixture_only(self):
        pool = SensorPool.from_arrays(np.eye(2), [1.0, 1.0])
        rep = check_detectability_conditions(self.sys, pool, [0.5, 0.5])
        assert rep.per_candidate == (True, False)
        assert not rep.all_candidates_detectable
        assert rep.mixture_detectable
        assert rep.satisfied_condition == "mixture-only"
        assert any("2" in w for w in rep.warnings)

    def test_neither_condition(self):
        pool = SensorPool.from_arrays(np.array([[0.0, 1.0]]), [1.0])
        rep = check_detectability_conditions(self.sys, pool, [1.0])
        assert rep.satisfied_condition == "none"
        assert rep.warnings


class TestAugmentSelection:
    sys = LtiSystem(A=np.diag([2.0, 0.5]), Q=0.5 * np.eye(2))
    pool = SensorPool.from_arrays(np.eye(2), [1.0, 1.0])

    def test_empty_anchor_is_identity(self):
        sel = Selection((2, 2))
        assert augment_selection(sel, Selection(())) is sel

    def test_concatenation(self):
        out = augment_selection(Selection((2,)), Selection((1,)))
        assert out.indices == (2, 1)
        assert out.kind == "homogeneous"

    def test_anchor_restores_detectability(self):
        sel = Selection((2,))  # observes only the stable mode
        C, _ = assemble_output(self.pool, sel)
        assert not pbh_detectable(self.sys.A, C)
        out = augment_selection(sel, Selection((1,)), pool=self.pool, system=self.sys)
        C2, _ = assemble_output(self.pool, out)
        assert pbh_detectable(self.sys.A, C2)

    def test_bad_anchor_rejected(self):
        with pytest.raises(DetectabilityError):
            augment_selection(Selection((1,)), Selection((2,)), pool=self.pool, system=self.sys)

    def test_kind_and_count_preserved(self):
        sel = Selection((1,), kind="constrained", rejection_count=4)
        out = augment_selection(sel, Selection((2,)))
        assert out.kind == "constrained" and out.rejection_count == 4


class TestPartitioning:
    def test_even_split(self):
        part = Partitioning.even(420, 120, 2, 0.05)
        assert part.K == 2
        assert part.candidate_counts == (210, 210)
        assert part.sample_counts == (60, 60)
        # Per-group budget chosen so the overall floor multiplies back to 1 - delta.
        d = part.confidences[0]
        assert d == pytest.approx(1.0 - (1.0 - 0.05) ** 0.5, abs=1e-15)
        assert (1.0 - d) ** 2 == pytest.approx(0.95, abs=1e-12)

    def test_even_split_divisibility(self):
        with pytest.raises(DomainError):
            Partitioning.even(10, 9, 2, 0.05)
        with pytest.raises(DomainError):
            Partitioning.even(9, 10, 2, 0.05)

    def test_bounds_and_membership(self):
        part = Partitioning((3, 2, 4), (5, 5, 5), (0.05, 0.05, 0.05))
        assert [part.start(i) for i in (1, 2, 3)] == [1, 4, 6]
        assert [part.stop(i) for i in (1, 2, 3)] == [3, 5, 9]
        assert part.group_of(1) == 1 and part.group_of(4) == 2 and part.group_of(9) == 3
        assert part.group_slice(2) == slice(3, 5)
        assert part.n_c == 9 and part.n_s == 15

    def test_random_partitions_cover_without_gaps(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            k = int(rng.integers(1, 6))
            ncs = tuple(int(v) for v in rng.integers(1, 8, size=k))
            part = Partitioning(ncs, (1,) * k, (0.1,) * k)
            covered = []
            for i in range(1, k + 1):
                lo, hi = part.start(i), part.stop(i)
                assert hi - lo + 1 == ncs[i - 1]
                covered.extend(range(lo, hi + 1))
            assert covered == list(range(1, part.n_c + 1))

    def test_validation(self):
        with pytest.raises(DomainError):
            Partitioning((0,), (1,), (0.1,))
        with pytest.raises(DomainError):
            Partitioning((1,), (0,), (0.1,))
        with pytest.raises(DomainError):
            Partitioning((1,), (1,), (1.0,))
        with pytest.raises(DimensionError):
            Partitioning((1, 1), (1,), (0.1, 0.1))

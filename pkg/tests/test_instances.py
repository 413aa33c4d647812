"""Tests for random instance generation."""

import time

import numpy as np
import pytest

from kalsel import instances
from kalsel.errors import DomainError, GenerationError
from kalsel.instances import generate_instance
from kalsel.sampling import RngStream
from kalsel.system import check_detectability_conditions


class TestGenerateInstance:
    def test_replay_is_bit_exact(self):
        sys_a, pool_a = generate_instance(3, 8, RngStream(42))
        sys_b, pool_b = generate_instance(3, 8, RngStream(42))
        assert np.array_equal(sys_a.A, sys_b.A)
        assert np.array_equal(pool_a.rows, pool_b.rows)
        assert np.array_equal(pool_a.variances, pool_b.variances)

    def test_streams_give_distinct_instances(self):
        sys_a, _ = generate_instance(3, 8, RngStream(42, stream=1))
        sys_b, _ = generate_instance(3, 8, RngStream(42, stream=2))
        assert not np.array_equal(sys_a.A, sys_b.A)

    def test_every_pair_detectable(self):
        rng = RngStream(7)
        for _ in range(5):
            system, pool = generate_instance(3, 10, rng)
            report = check_detectability_conditions(
                system, pool, np.full(10, 0.1)
            )
            assert report.satisfied_condition == "all-candidates"

    def test_noise_structure(self):
        system, pool = generate_instance(2, 5, RngStream(3), sigma2=0.25, q_scale=2.0)
        np.testing.assert_array_equal(system.Q, 2.0 * np.eye(2))
        np.testing.assert_array_equal(pool.variances, np.full(5, 0.25))

    def test_entries_live_on_unit_interval(self):
        system, pool = generate_instance(3, 20, RngStream(11))
        assert np.all(system.A >= 0.0) and np.all(system.A < 1.0)
        assert np.all(pool.rows >= 0.0) and np.all(pool.rows < 1.0)

    def test_variate_accounting(self):
        # each attempt consumes exactly m*m + n_c*m variates
        rng = RngStream(19)
        generate_instance(3, 8, rng)
        per_attempt = 9 + 24
        assert rng.counter % per_attempt == 0
        assert rng.counter >= per_attempt

    def test_spectral_radius_override(self):
        system, _ = generate_instance(3, 6, RngStream(5), spectral_radius=0.9)
        radius = float(np.max(np.abs(np.linalg.eigvals(system.A))))
        assert radius == pytest.approx(0.9, abs=1e-9)

    def test_unscaled_dynamics_typically_unstable(self):
        # positive uniform entries push the dominant eigenvalue near m/2
        system, _ = generate_instance(3, 6, RngStream(23))
        radius = float(np.max(np.abs(np.linalg.eigvals(system.A))))
        assert radius > 1.0

    def test_large_pool_generates_quickly(self):
        tic = time.perf_counter()
        generate_instance(3, 420, RngStream(1))
        assert time.perf_counter() - tic < 1.0

    def test_retry_budget_exhaustion(self, monkeypatch):
        monkeypatch.setattr(instances, "pbh_detectable", lambda a, c: False)
        rng = RngStream(1)
        with pytest.raises(GenerationError):
            generate_instance(2, 3, rng, max_regenerations=5)
        assert rng.counter == 5 * (4 + 6)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"m": 0},
            {"n_c": 0},
            {"sigma2": 0.0},
            {"q_scale": -1.0},
            {"spectral_radius": 0.0},
            {"max_regenerations": 0},
        ],
    )
    def test_validation(self, kwargs):
        base = {"m": 2, "n_c": 3}
        base.update(kwargs)
        with pytest.raises(DomainError):
            generate_instance(base.pop("m"), base.pop("n_c"), RngStream(1), **base)

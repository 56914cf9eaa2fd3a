import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biofuse.errors import (DimensionMismatch, EmptyObservationSet,
                            ModelFormatError, TooFewObservations)
from biofuse.gmm import (EmConfig, GmmModel, em_fit, kmeans_init,
                         load_model, log_likelihood, match_score,
                         model_from_dict, model_to_dict, responsibilities,
                         save_model)


def _simple_model(weights, means, variances):
    return GmmModel(weights=np.asarray(weights, float),
                    means=np.asarray(means, float).reshape(len(weights), -1),
                    variances=np.asarray(variances, float).reshape(
                        len(weights), -1))


class TestKmeansInit:
    def test_two_tight_pairs(self):
        data = np.array([[0.0], [0.1], [10.0], [10.1]])

        # oracle: enumerate every 2-partition, pick minimal within-cluster SSE
        best = None
        for mask in itertools.product([0, 1], repeat=4):
            if len(set(mask)) < 2:
                continue
            groups = [data[np.array(mask) == g] for g in (0, 1)]
            sse = sum(((g - g.mean(axis=0)) ** 2).sum() for g in groups)
            if best is None or sse < best[0]:
                best = (sse, sorted(float(g.mean()) for g in groups))
        assert best[1] == [0.05, 10.05]

        model = kmeans_init(data, 2, seed=0)
        assert sorted(model.means.ravel().tolist()) == pytest.approx(
            best[1], abs=1e-12)
        assert sorted(model.weights.tolist()) == [0.5, 0.5]

    def test_single_cluster_is_sample_mean(self):
        rng = np.random.default_rng(1)
        data = rng.normal(3.0, 2.0, (50, 3))
        model = kmeans_init(data, 1, seed=5)
        assert np.allclose(model.means[0], data.mean(axis=0))
        assert model.weights.tolist() == [1.0]

    def test_too_few_observations(self):
        with pytest.raises(TooFewObservations):
            kmeans_init(np.zeros((3, 2)), 5, seed=0)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(2)
        data = rng.normal(0, 1, (100, 4))
        a = kmeans_init(data, 3, seed=9)
        b = kmeans_init(data, 3, seed=9)
        assert np.array_equal(a.means, b.means)
        assert np.array_equal(a.weights, b.weights)

    def test_variances_floored(self):
        data = np.array([[0.0], [0.0], [5.0], [5.0]])
        model = kmeans_init(data, 2, seed=0, cov_floor=1e-4)
        assert np.all(model.variances >= 1e-4)


class TestEmFit:
    def test_single_component_closed_form(self):
        data = np.array([[0.0], [2.0], [4.0]])
        model, trace = em_fit(data, EmConfig(n_components=1, restarts=1, seed=3))
        assert model.means[0, 0] == pytest.approx(2.0, abs=1e-12)
        assert model.variances[0, 0] == pytest.approx(8.0 / 3.0, abs=1e-12)
        assert np.all(np.diff(trace) >= -1e-9)

    def test_two_component_recovery(self):
        rng = np.random.default_rng(11)
        data = np.concatenate([rng.normal(-5.0, 1.0, 1000),
                               rng.normal(5.0, 1.0, 1000)]).reshape(-1, 1)
        model, _ = em_fit(data, EmConfig(n_components=2, seed=17))
        means = sorted(model.means.ravel().tolist())
        assert abs(means[0] - (-5.0)) < 0.2
        assert abs(means[1] - 5.0) < 0.2
        assert abs(model.weights[0] - 0.5) < 0.05

    def test_fixed_point_of_converged_model(self):
        # crisp clusters converge to a machine-level EM fixed point;
        # re-feeding that model as the init must not move the likelihood
        rng = np.random.default_rng(23)
        data = np.concatenate([rng.normal(-6, 1, (150, 2)),
                               rng.normal(6, 1, (150, 2))])
        config = EmConfig(n_components=2, seed=8, tol=1e-13, max_iters=500)
        model, _ = em_fit(data, config)
        _, trace = em_fit(data, config, init=model)
        assert all(abs(b - a) <= 1e-9 for a, b in zip(trace, trace[1:]))

    def test_fixed_point_single_component(self):
        rng = np.random.default_rng(29)
        data = rng.normal(1.0, 2.0, (100, 3))
        config = EmConfig(n_components=1, restarts=1, seed=0)
        model, _ = em_fit(data, config)
        _, trace = em_fit(data, config, init=model)
        assert all(abs(b - a) <= 1e-9 for a, b in zip(trace, trace[1:]))

    def test_trace_nondecreasing_random_instances(self):
        for i in range(20):
            rng = np.random.default_rng(100 + i)
            d = 1 + i % 3
            data = np.concatenate([
                rng.normal(rng.uniform(-4, 4), rng.uniform(0.5, 2.0), (60, d))
                for _ in range(2)])
            _, trace = em_fit(data, EmConfig(
                n_components=1 + i % 3, restarts=1, seed=i, tol=1e-8))
            assert np.all(np.diff(trace) >= -1e-9)

    def test_invariants_hold_after_every_iteration(self):
        rng = np.random.default_rng(31)
        data = rng.normal(0, 1, (80, 2))
        for iters in range(1, 6):
            config = EmConfig(n_components=3, max_iters=iters,
                              restarts=1, seed=12)
            model, _ = em_fit(data, config)
            assert model.weights.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(model.weights >= 0)
            assert np.all(model.variances >= config.cov_floor)

    def test_too_few_observations(self):
        with pytest.raises(TooFewObservations):
            em_fit(np.zeros((2, 1)), EmConfig(n_components=4))

    def test_dead_component_revived(self):
        # a component seeded absurdly far away underflows to zero
        # responsibility mass; one re-seed brings it back into the data
        rng = np.random.default_rng(43)
        data = rng.normal(0, 1, (100, 1))
        init = _simple_model([0.5, 0.5], [[0.0], [1e8]], [[1.0], [1.0]])
        model, _ = em_fit(data, EmConfig(n_components=2, restarts=1, seed=0),
                          init=init)
        assert np.all(model.weights > 0)
        assert np.all(np.abs(model.means) < 10.0)

    def test_constant_data_converges_to_floor(self):
        # all-identical observations: the variance floor is the constrained
        # maximum-likelihood solution, reached without any re-seeding
        data = np.full((50, 2), 3.0)
        config = EmConfig(n_components=1, restarts=1, seed=0)
        model, trace = em_fit(data, config)
        assert np.allclose(model.means[0], 3.0)
        assert np.allclose(model.variances[0], config.cov_floor)
        assert np.all(np.diff(trace) >= -1e-9)

    def test_restarts_pick_best_loglik(self):
        rng = np.random.default_rng(37)
        data = np.concatenate([rng.normal(-3, 0.5, (100, 1)),
                               rng.normal(3, 0.5, (100, 1))])
        _, trace1 = em_fit(data, EmConfig(n_components=2, restarts=1, seed=2))
        _, trace5 = em_fit(data, EmConfig(n_components=2, restarts=5, seed=2))
        assert trace5[-1] >= trace1[-1] - 1e-9

    def test_config_validation(self):
        with pytest.raises(ValueError):
            em_fit(np.zeros((5, 1)), EmConfig(n_components=0))
        with pytest.raises(ValueError):
            em_fit(np.zeros((5, 1)), EmConfig(tol=0.0))


class TestLogLikelihood:
    def test_standard_normal_at_mode(self):
        model = _simple_model([1.0], [0.0], [1.0])
        expected = -0.5 * math.log(2.0 * math.pi)  # -0.91894
        assert log_likelihood(model, [0.0]) == pytest.approx(expected,
                                                             abs=1e-12)

    def test_symmetric_mixture_at_midpoint(self):
        a = 2.5
        model = _simple_model([0.5, 0.5], [[-a], [a]], [[1.0], [1.0]])
        expected = -0.5 * math.log(2.0 * math.pi) - a * a / 2.0  # log N(a;0,1)
        assert log_likelihood(model, [0.0]) == pytest.approx(expected,
                                                             abs=1e-12)

    def test_deep_tail_stays_finite(self):
        model = _simple_model([1.0], [0.0], [1.0])
        value = log_likelihood(model, [100.0])
        assert math.isfinite(value)
        assert value == pytest.approx(-5000.0 - 0.5 * math.log(2 * math.pi),
                                      abs=1e-9)

    def test_component_permutation_invariance(self):
        rng = np.random.default_rng(41)
        weights = np.array([0.2, 0.5, 0.3])
        means = rng.normal(0, 2, (3, 4))
        variances = rng.uniform(0.5, 2.0, (3, 4))
        model = GmmModel(weights, means, variances)
        perm = [2, 0, 1]
        shuffled = GmmModel(weights[perm], means[perm], variances[perm])
        x = rng.normal(0, 1, 4)
        assert log_likelihood(model, x) == pytest.approx(
            log_likelihood(shuffled, x), abs=1e-12)

    def test_dimension_mismatch(self):
        model = _simple_model([1.0], [0.0], [1.0])
        with pytest.raises(DimensionMismatch):
            log_likelihood(model, [0.0, 1.0])

    def test_zero_weight_component_ignored(self):
        model = _simple_model([1.0, 0.0], [[0.0], [50.0]], [[1.0], [1.0]])
        expected = -0.5 * math.log(2.0 * math.pi)
        assert log_likelihood(model, [0.0]) == pytest.approx(expected,
                                                             abs=1e-12)


class TestResponsibilities:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_rows_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 5))
        d = int(rng.integers(1, 4))
        weights = rng.dirichlet(np.ones(m))
        model = GmmModel(weights, rng.normal(0, 3, (m, d)),
                         rng.uniform(0.2, 2.0, (m, d)))
        data = rng.normal(0, 3, (20, d))
        resp = responsibilities(model, data)
        assert np.allclose(resp.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(resp >= 0)


class TestMatchScore:
    def test_identical_models_score_zero(self):
        rng = np.random.default_rng(51)
        model = _simple_model([0.4, 0.6], [[0.0], [2.0]], [[1.0], [0.5]])
        obs = rng.normal(0, 1, (30, 1))
        assert match_score(model, model, obs) == 0.0

    def test_single_observation_no_background(self):
        model = _simple_model([1.0], [1.5], [2.0])
        x = np.array([[0.3]])
        assert match_score(model, None, x) == pytest.approx(
            log_likelihood(model, [0.3]), abs=1e-12)

    def test_genuine_scores_positive_for_matching_model(self):
        client = _simple_model([1.0], [0.0], [1.0])
        background = _simple_model([1.0], [8.0], [1.0])
        positive = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            obs = rng.normal(0.0, 1.0, (40, 1))
            if match_score(client, background, obs) > 0:
                positive += 1
        assert positive >= 99

    def test_empty_observation_set(self):
        model = _simple_model([1.0], [0.0], [1.0])
        with pytest.raises(EmptyObservationSet):
            match_score(model, None, np.zeros((0, 1)))

    def test_dimension_mismatch(self):
        model = _simple_model([1.0], [0.0], [1.0])
        with pytest.raises(DimensionMismatch):
            match_score(model, None, np.zeros((3, 2)))


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(61)
        model = GmmModel(rng.dirichlet(np.ones(3)),
                         rng.normal(0, 1, (3, 5)),
                         rng.uniform(0.1, 2.0, (3, 5)))
        path = tmp_path / "model.json"
        save_model(model, path, "face", "s42")
        loaded, modality, sid = load_model(path)
        assert modality == "face" and sid == "s42"
        assert np.allclose(loaded.weights, model.weights, atol=0)
        assert np.allclose(loaded.means, model.means, atol=0)
        assert np.allclose(loaded.variances, model.variances, atol=0)

    def test_rejects_bad_weights(self):
        doc = model_to_dict(_simple_model([1.0], [0.0], [1.0]), "face", "x")
        doc["weights"] = [0.7]
        with pytest.raises(ModelFormatError):
            model_from_dict(doc)

    def test_rejects_nonpositive_variance(self):
        doc = model_to_dict(_simple_model([1.0], [0.0], [1.0]), "face", "x")
        doc["variances"] = [[0.0]]
        with pytest.raises(ModelFormatError):
            model_from_dict(doc)

    def test_rejects_wrong_version(self):
        doc = model_to_dict(_simple_model([1.0], [0.0], [1.0]), "face", "x")
        doc["format_version"] = 99
        with pytest.raises(ModelFormatError):
            model_from_dict(doc)

    def test_rejects_component_count_mismatch(self):
        doc = model_to_dict(_simple_model([1.0], [0.0], [1.0]), "face", "x")
        doc["M"] = 2
        with pytest.raises(ModelFormatError):
            model_from_dict(doc)


class TestModelValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            GmmModel(np.array([0.5, 0.4]), np.zeros((2, 1)), np.ones((2, 1)))

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            GmmModel(np.array([1.2, -0.2]), np.zeros((2, 1)), np.ones((2, 1)))

    def test_nonpositive_variance(self):
        with pytest.raises(ValueError):
            GmmModel(np.array([1.0]), np.zeros((1, 1)), np.zeros((1, 1)))

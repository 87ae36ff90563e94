import dataclasses

import numpy as np
import pytest

from spbp.engine import run
from spbp.errors import ConfigError, EmptyLogsError, UpdateFailedError
from spbp.factor_graph import Edge, NodeSpec, Schedule, Variant, build_graph
from spbp.gaussian import GaussianBelief
from spbp.localization import (
    LOCATION,
    RANGE_FN,
    CommLedger,
    MotionModel,
    ScenarioConfig,
    ScenarioLog,
    default_motion_model,
    payload_size,
    predict_belief,
    range_measurement,
    rmse,
    run_scenario,
)
from spbp.oracles import mc_posterior_mean

ANCHORS = ((0.0, 25.0), (50.0, 25.0))


def log_from_errors(errors: np.ndarray) -> ScenarioLog:
    """Logs whose mean - truth equals ``errors`` (shape runs x T x M x 4)."""
    runs, T, M, _ = errors.shape
    return ScenarioLog(
        config=ScenarioConfig(runs=max(runs, 1), T=max(T, 1)),
        truth=np.zeros_like(errors),
        mean=errors,
        cov=np.zeros(errors.shape + (4,)),
        ledger=CommLedger(np.zeros((runs, T, 1, M), dtype=int), np.zeros((runs, M), dtype=int)),
        sigma_points=np.zeros((runs, T, 1, M), dtype=int),
    )


class TestMotion:
    def test_propagate_noiseless(self):
        m = default_motion_model()
        np.testing.assert_allclose(m.propagate([0, 0, 0.2, 1]), [0.2, 1, 0.2, 1], rtol=1e-15)

    def test_process_covariance(self):
        m = default_motion_model()
        expected = 1e-4 * np.array(
            [[0.25, 0, 0.5, 0], [0, 0.25, 0, 0.5], [0.5, 0, 1, 0], [0, 0.5, 0, 1]]
        )
        np.testing.assert_allclose(m.process_cov, m.sigma_u2 * m.W @ m.W.T, rtol=1e-15)
        np.testing.assert_allclose(m.process_cov, expected, rtol=1e-15)

    def test_straight_lines_without_noise(self):
        cfg = ScenarioConfig(runs=1, T=10, sigma_u2=0.0)
        log = run_scenario(cfg, use_measurements=False)
        x0 = np.array(cfg.initial_states)
        for t in range(10):
            expected = x0[:, :2] + (t + 1) * x0[:, 2:]
            np.testing.assert_allclose(log.truth[0, t, :, :2], expected, atol=1e-12)

    def test_invalid_shapes(self):
        with pytest.raises(ValueError):
            MotionModel(np.eye(3), np.zeros((4, 2)), 1.0)
        with pytest.raises(ValueError):
            MotionModel(np.eye(4), np.zeros((4, 2)), -1.0)


@pytest.mark.parametrize(
    "a, b, expected", [((0, 0), (3, 4), 5.0), ((2, 7), (2, 7), 0.0), ((0, 0), (0, 25), 25.0)]
)
def test_range_measurement(a, b, expected):
    assert range_measurement(a, b) == expected
    assert RANGE_FN(np.array(a, float), np.array(b, float))[0] == expected


class TestPredict:
    def test_point_mass(self):
        m = dataclasses.replace(default_motion_model(), sigma_u2=0.0)
        b = predict_belief(GaussianBelief([0, 0, 0.2, 1], np.zeros((4, 4))), m)
        np.testing.assert_allclose(b.mean, [0.2, 1, 0.2, 1], rtol=1e-15)
        np.testing.assert_array_equal(b.cov, np.zeros((4, 4)))

    def test_identity_covariance(self):
        m = default_motion_model(sigma_u2=0.0)
        b = predict_belief(GaussianBelief(np.zeros(4), np.eye(4)), m)
        np.testing.assert_allclose(b.cov, m.G @ m.G.T, rtol=1e-15)

    def test_stationary(self):
        m = MotionModel(np.eye(4), np.zeros((4, 2)), 1.0)
        prior = GaussianBelief([1, 2, 3, 4], np.diag([1.0, 2, 3, 4]))
        b = predict_belief(prior, m)
        np.testing.assert_array_equal(b.mean, prior.mean)
        np.testing.assert_array_equal(b.cov, prior.cov)


class TestRmse:
    def test_single_error(self):
        e = np.zeros((1, 1, 1, 4))
        e[..., :2] = (3, 4)
        np.testing.assert_allclose(rmse(log_from_errors(e), "location"), [5.0], rtol=1e-15)
        np.testing.assert_allclose(rmse(log_from_errors(e), "velocity"), [0.0])
        np.testing.assert_allclose(rmse(log_from_errors(e), "both"), [5.0], rtol=1e-15)

    def test_zero(self):
        np.testing.assert_array_equal(rmse(log_from_errors(np.zeros((3, 4, 2, 4)))), np.zeros(4))

    def test_mean_of_squared_norms(self):
        e = np.zeros((2, 1, 1, 4))
        e[0, 0, 0, :2] = (1, 0)
        e[1, 0, 0, :2] = (0, 1)
        np.testing.assert_allclose(rmse(log_from_errors(e)), [1.0], rtol=1e-15)

    def test_empty(self):
        with pytest.raises(EmptyLogsError):
            rmse(log_from_errors(np.zeros((0, 1, 1, 4))))


class TestScenario:
    def test_counts_on_default_scenario(self):
        log = run_scenario(ScenarioConfig(runs=1, T=3))
        assert np.all(log.sigma_points == 25)
        assert payload_size(2) == 5
        assert np.all(log.ledger.reals[..., :3] == 5)
        assert np.all(log.ledger.reals[..., 3:] == 0)
        assert np.all(log.ledger.setup_reals[:, 3:] == 2)

    def test_determinism(self):
        cfg = ScenarioConfig(runs=2, T=5, seed=9)
        a, b = run_scenario(cfg), run_scenario(cfg)
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.cov, b.cov)

    def test_workers_match_serial(self):
        cfg = ScenarioConfig(runs=3, T=4, seed=2)
        np.testing.assert_array_equal(run_scenario(cfg).mean, run_scenario(cfg, workers=2).mean)

    def test_baseline_shares_trajectories(self):
        cfg = ScenarioConfig(runs=2, T=5, seed=4)
        np.testing.assert_array_equal(run_scenario(cfg).truth, run_scenario(cfg, use_measurements=False).truth)

    def test_noiseless_consistency(self):
        # exact priors; sigma_n2 = 0 itself is a singular innovation, so take the limit
        exact = tuple(map(tuple, np.zeros((4, 4))))
        cfg = ScenarioConfig(runs=2, T=20, sigma_n2=1e-12, sigma_u2=0.0, C0=exact)
        log = run_scenario(cfg)
        assert log.location_error.max() <= 1e-9
        assert log.velocity_error.max() <= 1e-9

    def test_zero_noise_with_exact_priors_is_singular(self):
        cfg = ScenarioConfig(runs=1, T=2, sigma_n2=0.0, sigma_u2=0.0, C0=tuple(map(tuple, np.zeros((4, 4)))))
        with pytest.raises(UpdateFailedError) as info:
            run_scenario(cfg)
        assert (info.value.run, info.value.time, info.value.node) == (0, 1, 1)

    def test_anchor_ranges_reduce_error(self):
        # well-separated anchor bearings, so two near-noiseless ranges pin the location
        states = ((25.0, 45.0, 0.3, -0.3),)
        for seed in range(20):
            cfg = ScenarioConfig(runs=1, T=1, sigma_n2=1e-6, initial_states=states, num_mobile=1, seed=seed)
            with_z = run_scenario(cfg).location_error[0, 0, 0]
            without = run_scenario(cfg, use_measurements=False).location_error[0, 0, 0]
            assert with_z < without

    def test_anchor_update_matches_monte_carlo(self):
        truth = np.array([20.0, 20.0])
        prior = GaussianBelief([20.6, 19.5, 0.0, 0.0], np.diag([1.0, 1.0, 0.01, 0.01]))
        anchors = [GaussianBelief(a, np.zeros((2, 2))) for a in ANCHORS]
        z = {(1, 2): [np.linalg.norm(truth - ANCHORS[0])], (1, 3): [np.linalg.norm(truth - ANCHORS[1])]}
        nodes = [NodeSpec(4, LOCATION, prior)] + [NodeSpec(2, LOCATION, a, is_anchor=True) for a in anchors]
        g = build_graph(nodes, [Edge(k, l, [[0.01]], obs) for (k, l), obs in z.items()], RANGE_FN)
        spbp = run(g, Schedule(Variant.SPAWN, 2)).beliefs[1].mean[:2]

        mc = mc_posterior_mean(
            [prior, *anchors],
            lambda a, b: np.linalg.norm(a[:, :2] - b, axis=-1),
            0.01,
            z,
            num_samples=400_000,
            seed=0,
        )
        tol = np.maximum(0.1, 3 * mc.std_errors[0][:2])
        assert np.all(np.abs(spbp - mc.means[0][:2]) <= tol)
        assert np.linalg.norm(spbp - truth) < np.linalg.norm(prior.mean[:2] - truth)

    def test_means_finite_across_seeds(self):
        log = run_scenario(ScenarioConfig(runs=4, T=50, seed=123))
        assert np.all(np.isfinite(log.mean)) and np.all(np.isfinite(log.cov))
        for cov in log.cov.reshape(-1, 4, 4):
            assert np.linalg.eigvalsh(cov).min() >= -1e-9


class TestConfig:
    def test_defaults(self):
        cfg = ScenarioConfig()
        assert (cfg.num_mobile, cfg.num_anchor, cfg.T, cfg.P, cfg.runs) == (3, 2, 50, 2, 1000)
        assert cfg.sigma_n2 == 1.0 and cfg.sigma_u2 == 1e-4
        assert cfg.anchor_locations == ANCHORS

    def test_round_trip(self):
        cfg = ScenarioConfig(runs=7, seed=3, P=1)
        assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg

    def test_diagonal_c0(self):
        cfg = ScenarioConfig.from_dict({"C0": [2, 2, 0.1, 0.1]})
        np.testing.assert_array_equal(np.array(cfg.C0), np.diag([2, 2, 0.1, 0.1]))

    def test_counts_follow_lists(self):
        cfg = ScenarioConfig.from_dict({"initial_states": [[0, 0, 1, 1]], "anchor_locations": []})
        assert cfg.num_mobile == 1 and cfg.num_anchor == 0

    @pytest.mark.parametrize(
        "data, field",
        [
            ({"T": 0}, "T"),
            ({"runs": 2.5}, "runs"),
            ({"sigma_n2": -1}, "sigma_n2"),
            ({"variant": "loopy"}, "variant"),
            ({"bogus": 1}, "bogus"),
            ({"num_mobile": 2}, "initial_states"),
            ({"C0": [[1, 2], [3, 4]]}, "C0"),
        ],
    )
    def test_invalid(self, data, field):
        with pytest.raises(ConfigError) as info:
            ScenarioConfig.from_dict(data)
        assert info.value.field == field

"""Tests for the GM-PHD prediction, update, birth, prune/merge, and extraction."""

import numpy as np
import pytest

from gmphd_sat import (
    FilterConfig,
    FovDisk,
    GaussianComponent,
    Intensity,
    LinearMotionModel,
    SensorModel,
    birth_from_measurements,
    extract_targets,
    predict,
    prob_detection,
    prune_merge,
    repulsion_push,
    update,
)

from kalman_oracle import ReferenceKalman


def make_sensor(center=(0.0, 0.0), radius=25.0, p_in=0.98, noise=1.0, clutter=0.0):
    return SensorModel(
        fov=FovDisk(center=np.asarray(center, dtype=float), radius=radius),
        p_detect_given_in=p_in,
        meas_noise=noise * np.eye(2),
        clutter_mean=clutter,
    )


def random_intensity(rng, n, spread=50.0):
    w = rng.uniform(0.05, 2.0, size=n)
    m = rng.uniform(-spread, spread, size=(n, 2))
    P = np.zeros((n, 2, 2))
    for i in range(n):
        A = rng.normal(size=(2, 2))
        P[i] = A @ A.T + 0.5 * np.eye(2)
    return Intensity.from_arrays(w, m, P)


class TestPredict:
    def test_identity_dynamics(self):
        rng = np.random.default_rng(0)
        prior = random_intensity(rng, 4)
        model = LinearMotionModel(np.eye(2), np.zeros((2, 2)), survival_prob=1.0)
        post = predict(prior, model)
        assert np.allclose(post.weights, prior.weights)
        assert np.allclose(post.means, prior.means)
        assert np.allclose(post.covariances, prior.covariances)

    def test_constant_velocity_four_state(self):
        F = np.eye(4)
        F[0, 2] = F[1, 3] = 1.0
        model = LinearMotionModel(F, np.zeros((4, 4)), survival_prob=1.0)
        prior = Intensity([GaussianComponent(0.5, [0.0, 0.0, 1.0, -2.0], np.eye(4))])
        post = predict(prior, model)
        assert post.weights[0] == pytest.approx(0.5)
        assert np.allclose(post.means[0], [1.0, -2.0, 1.0, -2.0])

    def test_against_per_component_oracle(self):
        rng = np.random.default_rng(1)
        prior = random_intensity(rng, 5)
        F = np.array([[1.0, 0.1], [0.0, 0.9]])
        Q = np.array([[0.3, 0.1], [0.1, 0.2]])
        model = LinearMotionModel(F, Q, survival_prob=0.95)
        post = predict(prior, model)
        for i, c in enumerate(prior):
            assert post.weights[i] == pytest.approx(0.95 * c.weight, abs=1e-12)
            assert np.allclose(post.means[i], F @ c.mean, atol=1e-12)
            assert np.allclose(post.covariances[i], F @ c.covariance @ F.T + Q, atol=1e-12)

    def test_gp_override_replaces_prediction(self):
        rng = np.random.default_rng(2)
        prior = random_intensity(rng, 3)
        Q = 0.1 * np.eye(2)
        model = LinearMotionModel(np.eye(2), Q)
        gp_mean = np.array([7.0, -3.0])
        gp_cov = np.diag([0.5, 0.8])
        post = predict(prior, model, gp_overrides={1: (gp_mean, gp_cov)})
        assert np.allclose(post.means[1], gp_mean)
        assert np.allclose(post.covariances[1], gp_cov + Q)
        assert np.allclose(post.means[0], prior.means[0])

    def test_bad_override_index(self):
        prior = Intensity([GaussianComponent(1.0, [0, 0], np.eye(2))])
        model = LinearMotionModel(np.eye(2), np.zeros((2, 2)))
        with pytest.raises(IndexError):
            predict(prior, model, gp_overrides={3: (np.zeros(2), np.eye(2))})


class TestRepulsionPush:
    def test_fixed_point_at_sensor(self):
        assert np.allclose(repulsion_push([4.0, 4.0], [4.0, 4.0], 0.7), [4.0, 4.0])

    def test_direct_substitution(self):
        assert np.allclose(repulsion_push([10.0, 0.0], [0.0, 0.0], 0.5), [15.0, 0.0])

    def test_zero_pd_no_move(self):
        assert np.allclose(repulsion_push([3.0, -2.0], [1.0, 1.0], 0.0), [3.0, -2.0])

    def test_never_moves_toward_sensor(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            mu = rng.normal(size=2) * 20
            y = rng.normal(size=2) * 20
            p = rng.uniform(0.0, 1.0)
            pushed = repulsion_push(mu, y, p)
            assert np.linalg.norm(pushed - y) >= np.linalg.norm(mu - y) - 1e-12


class TestUpdate:
    def test_no_information_far_from_fov(self):
        rng = np.random.default_rng(4)
        far = Intensity.from_arrays(
            rng.uniform(0.2, 1.5, size=5),
            rng.uniform(500.0, 600.0, size=(5, 2)),
            np.tile(np.eye(2), (5, 1, 1)),
        )
        out = update(far, [], make_sensor(), FilterConfig())
        assert np.allclose(out.weights, far.weights, atol=1e-12)
        assert np.allclose(out.means, far.means, atol=1e-12)

    def test_single_kalman_step_oracle(self):
        # p_D = 1 via a huge FOV, no clutter: the detection copy must equal a
        # textbook Kalman update and carry unit weight.
        prior_mean = np.array([2.0, -1.0])
        prior_cov = np.array([[3.0, 0.4], [0.4, 1.5]])
        sensor = make_sensor(radius=1e6, p_in=1.0, noise=0.8)
        z = np.array([2.7, -0.2])
        out = update(
            Intensity([GaussianComponent(1.0, prior_mean, prior_cov)]),
            [z],
            sensor,
            FilterConfig(),
        )
        assert len(out) == 2
        ref = ReferenceKalman(prior_mean, prior_cov, np.eye(2), np.zeros((2, 2)), np.eye(2), 0.8 * np.eye(2))
        ref.update(z)
        assert out.weights[0] == pytest.approx(0.0, abs=1e-12)  # no-detection copy
        assert out.weights[1] == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(out.means[1], ref.m, atol=1e-9)
        assert np.allclose(out.covariances[1], ref.P, atol=1e-9)

    def test_in_band_miss_halves_weight_and_pushes(self):
        # Mean on the FOV boundary gives p_D near 0.5; a stale (broad)
        # component with no supporting measurement gets repelled.
        sensor = make_sensor(center=(0.0, 0.0), radius=10.0, p_in=1.0, noise=1.0)
        comp = GaussianComponent(1.0, [10.0, 0.0], 4.0 * np.eye(2))
        cfg = FilterConfig()
        p_d = prob_detection(comp, sensor.fov, sensor.p_detect_given_in)
        assert cfg.pd_band_low <= p_d <= cfg.pd_band_high
        out = update(Intensity([comp]), [], sensor, cfg)
        assert out.weights[0] == pytest.approx((1.0 - p_d) * 1.0, abs=1e-9)
        expected_mean = repulsion_push(comp.mean, sensor.fov.center, p_d)
        assert np.allclose(out.means[0], expected_mean, atol=1e-9)
        assert np.allclose(out.covariances[0], comp.covariance)

    def test_push_disabled_leaves_mean(self):
        sensor = make_sensor(center=(0.0, 0.0), radius=10.0, p_in=1.0)
        comp = GaussianComponent(1.0, [10.0, 0.0], 4.0 * np.eye(2))
        out = update(Intensity([comp]), [], sensor, FilterConfig(), push=False)
        assert np.allclose(out.means[0], comp.mean)

    def test_no_push_when_supported_by_measurement(self):
        # A gated measurement this scan means no no-detection event occurred.
        sensor = make_sensor(center=(0.0, 0.0), radius=10.0, p_in=1.0, noise=1.0)
        comp = GaussianComponent(1.0, [10.0, 0.0], 4.0 * np.eye(2))
        out = update(Intensity([comp]), [[10.5, 0.3]], sensor, FilterConfig())
        assert np.allclose(out.means[0], comp.mean)  # miss copy stays put

    def test_no_push_when_supported_last_scan(self):
        # A single missed scan right after a supporting measurement is not a
        # no-detection event; the mean stays put.
        sensor = make_sensor(center=(0.0, 0.0), radius=10.0, p_in=1.0, noise=1.0)
        comp = GaussianComponent(1.0, [10.0, 0.0], 4.0 * np.eye(2))
        cfg = FilterConfig()
        out = update(
            Intensity([comp]), [], sensor, cfg, prev_measurements=[[10.4, -0.2]]
        )
        assert np.allclose(out.means[0], comp.mean)
        # Two scans without support: the push fires.
        out2 = update(
            Intensity([comp]), [], sensor, cfg, prev_measurements=np.zeros((0, 2))
        )
        assert not np.allclose(out2.means[0], comp.mean)

    def test_no_push_when_mean_outside_disk(self):
        # Pushing belief that is already leaving the FOV is meaningless.
        sensor = make_sensor(center=(0.0, 0.0), radius=10.0, p_in=1.0, noise=1.0)
        comp = GaussianComponent(1.0, [10.2, 0.0], 4.0 * np.eye(2))
        cfg = FilterConfig()
        p_d = prob_detection(comp, sensor.fov, sensor.p_detect_given_in)
        assert cfg.pd_band_low <= p_d <= cfg.pd_band_high
        out = update(Intensity([comp]), [], sensor, cfg)
        assert np.allclose(out.means[0], comp.mean)

    def test_output_size(self):
        rng = np.random.default_rng(5)
        v = random_intensity(rng, 7, spread=20.0)
        Z = rng.uniform(-20, 20, size=(3, 2))
        out = update(v, Z, make_sensor(), FilterConfig())
        assert len(out) == 7 * (3 + 1)

    def test_detection_weights_sum_at_most_one_per_measurement(self):
        rng = np.random.default_rng(6)
        for clutter in [0.0, 0.5, 2.0]:
            v = random_intensity(rng, 6, spread=15.0)
            sensor = make_sensor(clutter=clutter)
            Z = rng.uniform(-10, 10, size=(2, 2))
            out = update(v, Z, sensor, FilterConfig())
            n = len(v)
            for j in range(len(Z)):
                block = out.weights[n * (j + 1) : n * (j + 2)]
                assert np.sum(block) <= 1.0 + 1e-12

    def test_cardinality_preserved_when_unobservable(self):
        rng = np.random.default_rng(7)
        v = Intensity.from_arrays(
            rng.uniform(0.2, 1.5, size=8),
            rng.uniform(400.0, 500.0, size=(8, 2)),
            np.tile(2.0 * np.eye(2), (8, 1, 1)),
        )
        model = LinearMotionModel(np.eye(2), 0.3 * np.eye(2), survival_prob=1.0)
        total = v.total_weight()
        for _ in range(20):
            v = update(predict(v, model), [], make_sensor(), FilterConfig())
        assert v.total_weight() == pytest.approx(total, abs=1e-9)

    def test_warns_outside_world(self):
        v = Intensity([GaussianComponent(1.0, [0, 0], np.eye(2))])
        with pytest.warns(UserWarning):
            update(
                v,
                [[500.0, 0.0]],
                make_sensor(),
                FilterConfig(),
                world_bounds=((0.0, 0.0), (150.0, 150.0)),
            )

    def test_kalman_equivalence_over_steps(self):
        # One component, one target, p_D = 1, no clutter, one measurement per
        # step: the surviving component must track a standalone Kalman filter.
        rng = np.random.default_rng(8)
        F = np.eye(2)
        Q = 0.05 * np.eye(2)
        R = 0.9 * np.eye(2)
        sensor = SensorModel(
            fov=FovDisk(center=np.zeros(2), radius=1e6),
            p_detect_given_in=1.0,
            meas_noise=R,
            clutter_mean=0.0,
        )
        model = LinearMotionModel(F, Q, survival_prob=1.0)
        cfg = FilterConfig()
        mean0, cov0 = np.array([5.0, 5.0]), 4.0 * np.eye(2)
        v = Intensity([GaussianComponent(1.0, mean0, cov0)])
        ref = ReferenceKalman(mean0, cov0, F, Q, np.eye(2), R)
        truth = np.array([5.0, 5.0])
        for _ in range(100):
            z = truth + rng.multivariate_normal(np.zeros(2), R)
            v = prune_merge(update(predict(v, model), [z], sensor, cfg), cfg)
            ref.predict()
            ref.update(z)
            assert len(v) == 1
            assert np.allclose(v.means[0], ref.m, atol=1e-9)
            assert np.allclose(v.covariances[0], ref.P, atol=1e-9)


class TestBirth:
    def test_empty(self):
        assert birth_from_measurements([], make_sensor(), FilterConfig()) == []

    def test_single_measurement(self):
        births = birth_from_measurements([[3.0, 4.0]], make_sensor(noise=1.0), FilterConfig())
        assert len(births) == 1
        assert births[0].weight == pytest.approx(1.0)
        assert np.allclose(births[0].mean, [3.0, 4.0])
        assert np.allclose(births[0].covariance, np.eye(2))

    def test_count_and_total_weight(self):
        Z = np.arange(14.0).reshape(7, 2)
        births = birth_from_measurements(Z, make_sensor(), FilterConfig())
        assert len(births) == 7
        assert sum(b.weight for b in births) == pytest.approx(7.0)


class TestPruneMerge:
    def test_all_below_prune(self):
        v = Intensity.from_arrays(
            [1e-4, 5e-4], [[0.0, 0.0], [1.0, 1.0]], np.tile(np.eye(2), (2, 1, 1))
        )
        assert len(prune_merge(v, FilterConfig())) == 0

    def test_coincident_merge(self):
        c = GaussianComponent(0.4, [2.0, 3.0], np.array([[1.5, 0.2], [0.2, 1.0]]))
        v = Intensity([c, c])
        out = prune_merge(v, FilterConfig())
        assert len(out) == 1
        assert out.weights[0] == pytest.approx(0.8)
        assert np.allclose(out.means[0], c.mean)
        assert np.allclose(out.covariances[0], c.covariance, atol=1e-12)

    def test_weight_bookkeeping(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            v = random_intensity(rng, int(rng.integers(2, 30)))
            cfg = FilterConfig(max_components=1000)
            out = prune_merge(v, cfg)
            # Nothing pruned by weight or count: total weight preserved exactly.
            assert out.total_weight() == pytest.approx(v.total_weight(), abs=1e-12)
            tight = FilterConfig(max_components=3)
            out2 = prune_merge(v, tight)
            assert out2.total_weight() <= v.total_weight() + 1e-12

    def test_sorted_by_weight(self):
        rng = np.random.default_rng(10)
        v = random_intensity(rng, 12)
        out = prune_merge(v, FilterConfig())
        assert np.all(np.diff(out.weights) <= 1e-15)

    def test_idempotent(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            v = random_intensity(rng, int(rng.integers(2, 20)))
            cfg = FilterConfig()
            once = prune_merge(v, cfg)
            twice = prune_merge(once, cfg)
            assert len(once) == len(twice)
            assert np.allclose(once.weights, twice.weights, atol=1e-12)
            assert np.allclose(once.means, twice.means, atol=1e-12)
            assert np.allclose(once.covariances, twice.covariances, atol=1e-12)


class TestExtract:
    def test_threshold(self):
        v = Intensity.from_arrays(
            [0.6, 0.4, 0.51],
            [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]],
            np.tile(np.eye(2), (3, 1, 1)),
        )
        assert len(extract_targets(v, FilterConfig())) == 2

    def test_empty(self):
        assert extract_targets(Intensity(), FilterConfig()) == []

    def test_heavy_component_multiplicity(self):
        v = Intensity.from_arrays([2.2], [[1.0, 1.0]], [np.eye(2)])
        targets = extract_targets(v, FilterConfig())
        assert len(targets) == 2
        assert all(np.allclose(t.mean, [1.0, 1.0]) for t in targets)
        # Consistent with the total-weight cardinality estimate.
        assert len(targets) == round(v.total_weight())

    def test_half_up_rounding(self):
        v = Intensity.from_arrays([1.5], [[0.0, 0.0]], [np.eye(2)])
        assert len(extract_targets(v, FilterConfig())) == 2

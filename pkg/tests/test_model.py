import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kuramoto_oed.errors import IntegrationDivergedError
from kuramoto_oed.model import (
    KuramotoModel,
    SimConfig,
    Trajectory,
    augment_with_control,
    coupling_matrix,
    coupling_vector,
    detect_sync,
    export_trajectory_csv,
    integrate_rk4,
    load_model,
    n_pairs,
    order_parameter,
    pair_list,
    pair_to_flat,
    save_model,
)

FIVE_OMEGA = [-2.50, -0.6667, 1.1667, 2.0, 5.8333]
SEVEN_OMEGA = [-3.4600, -1.9611, -0.6754, -0.3806, -0.3675, 6.1161, 8.3287]


def two_osc(w1, w2, a, theta0=(0.0, 0.0)):
    return KuramotoModel(np.array([w1, w2]), np.array([a]), np.array(theta0))


class TestKuramotoModel:
    def test_coupling_length_checked(self):
        with pytest.raises(ValueError, match="couplings"):
            KuramotoModel(np.zeros(3), np.zeros(2), np.zeros(3))

    def test_negative_coupling_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            two_osc(1.0, -1.0, -0.1)

    def test_theta0_range_checked(self):
        with pytest.raises(ValueError, match="phases"):
            two_osc(1.0, -1.0, 0.5, theta0=(0.0, 7.0))

    def test_pair_indexing_roundtrip(self):
        n = 6
        for k, (i, j) in enumerate(pair_list(n)):
            assert pair_to_flat(n, i, j) == k

    def test_coupling_matrix_roundtrip(self):
        vec = np.arange(1.0, n_pairs(5) + 1)
        mat = coupling_matrix(5, vec)
        assert np.array_equal(coupling_vector(mat), vec)
        assert np.array_equal(mat, mat.T)

    def test_model_json_roundtrip(self, tmp_path):
        m = KuramotoModel(np.array(FIVE_OMEGA), np.arange(10) * 0.1,
                          np.full(5, 0.5))
        save_model(m, tmp_path / "m.json")
        m2 = load_model(tmp_path / "m.json")
        assert np.array_equal(m.omega, m2.omega)
        assert np.array_equal(m.coupling, m2.coupling)
        assert np.array_equal(m.theta0, m2.theta0)


class TestAugment:
    def test_five_osc_control_frequency(self):
        m = KuramotoModel.with_zero_phases(FIVE_OMEGA, np.zeros(10))
        aug = augment_with_control(m, 0.3)
        assert round(aug.omega[-1], 4) == 1.1667
        assert aug.n == 6

    def test_seven_osc_control_frequency(self):
        m = KuramotoModel.with_zero_phases(SEVEN_OMEGA, np.zeros(21))
        aug = augment_with_control(m, 0.0)
        assert round(aug.omega[-1], 4) == 1.0857

    def test_original_couplings_unchanged_and_uniform_column(self):
        rng = np.random.default_rng(0)
        vec = rng.uniform(0, 2, 10)
        m = KuramotoModel.with_zero_phases(FIVE_OMEGA, vec)
        aug = augment_with_control(m, 0.7)
        mat = aug.coupling_matrix()
        assert np.array_equal(coupling_vector(mat[:5, :5]), vec)
        assert np.all(mat[:5, 5] == 0.7)
        assert aug.theta0[-1] == 0.0

    def test_zero_control_keeps_original_dynamics(self):
        rng = np.random.default_rng(1)
        vec = rng.uniform(0, 1.5, 10)
        m = KuramotoModel.with_zero_phases(FIVE_OMEGA, vec)
        cfg = SimConfig(duration_s=2.0, sync_window=(1.0, 2.0))
        base = integrate_rk4(m, cfg)
        aug = integrate_rk4(augment_with_control(m, 0.0), cfg)
        assert np.allclose(base.phases, aug.phases[:5], atol=1e-12)

    def test_negative_control_rejected(self):
        m = KuramotoModel.with_zero_phases(FIVE_OMEGA, np.zeros(10))
        with pytest.raises(ValueError):
            augment_with_control(m, -1e-9)


class TestIntegrateRk4:
    def test_uncoupled_oscillator_is_linear(self):
        m = KuramotoModel(np.array([2.0]), np.zeros(0), np.zeros(1))
        traj = integrate_rk4(m, SimConfig())
        k = int(round(5.0 * 160))
        assert traj.times[k] == pytest.approx(5.0)
        assert abs(traj.phases[0, k] - 10.0) < 1e-9

    def test_identical_oscillators_stay_identical(self):
        m = two_osc(1.0, 1.0, 0.5)
        traj = integrate_rk4(m, SimConfig())
        assert np.array_equal(traj.phases[0], traj.phases[1])
        assert np.allclose(traj.phases[0], traj.times, atol=1e-12)

    def test_deterministic_bit_identical(self):
        m = two_osc(1.3, -0.7, 0.9)
        t1 = integrate_rk4(m, SimConfig())
        t2 = integrate_rk4(m, SimConfig())
        assert np.array_equal(t1.phases, t2.phases)

    def test_phases_not_wrapped(self):
        m = KuramotoModel(np.array([10.0]), np.zeros(0), np.zeros(1))
        traj = integrate_rk4(m, SimConfig(duration_s=2.0, sync_window=(1.0, 2.0)))
        assert traj.phases[0, -1] > 2 * np.pi

    def test_divergence_reported_with_step(self):
        # a frequency at float range makes the very first update overflow
        m = two_osc(1e308, 0.0, 0.5)
        with pytest.raises(IntegrationDivergedError) as err:
            integrate_rk4(m, SimConfig(duration_s=1.0, sync_window=(0.5, 1.0)))
        assert err.value.step >= 0


class TestDetectSync:
    def test_synchronized_pair_theorem1(self):
        # |w1 - w2| = 2 <= 2 a = 3
        traj = integrate_rk4(two_osc(1.0, -1.0, 1.5), SimConfig())
        assert detect_sync(traj, SimConfig()) is True

    def test_unsynchronized_pair_theorem1(self):
        # |w1 - w2| = 2 > 2 a = 1
        traj = integrate_rk4(two_osc(1.0, -1.0, 0.5), SimConfig())
        assert detect_sync(traj, SimConfig()) is False

    def test_identical_oscillators_sync(self):
        m = KuramotoModel(np.full(3, 1.7), np.zeros(3), np.full(3, 0.25))
        traj = integrate_rk4(m, SimConfig())
        assert detect_sync(traj, SimConfig()) is True

    def test_five_osc_class_no_spontaneous_sync(self):
        from kuramoto_oed.uncertainty import build_paper_class, true_coupling
        uc = build_paper_class("five_osc")
        m = KuramotoModel.with_zero_phases(uc.omega, true_coupling("five_osc"))
        traj = integrate_rk4(m, SimConfig())
        assert detect_sync(traj, SimConfig()) is False

    def test_raw_increment_flag_restores_literal_criterion(self):
        # a locked group drifting at nonzero mean frequency: the drift-
        # compensated detector accepts it, the raw criterion cannot.
        traj = integrate_rk4(two_osc(1.0, 1.2, 2.0), SimConfig())
        assert detect_sync(traj, SimConfig()) is True
        assert detect_sync(traj, SimConfig(raw_increment=True)) is False

    def test_window_bounds_error(self):
        traj = integrate_rk4(two_osc(1.0, -1.0, 1.5),
                             SimConfig(duration_s=2.0, sync_window=(1.0, 2.0)))
        with pytest.raises(ValueError, match="window"):
            detect_sync(traj, SimConfig())


class TestOrderParameter:
    def test_equal_phases_full_coherence(self):
        traj = Trajectory(np.array([0.0]), np.full((4, 1), 1.3))
        assert order_parameter(traj)[0] == pytest.approx(1.0)

    def test_antipodal_pair_cancels(self):
        traj = Trajectory(np.array([0.0]), np.array([[0.0], [np.pi]]))
        assert order_parameter(traj)[0] == pytest.approx(0.0, abs=1e-12)

    def test_quadrature_four_cancels(self):
        phases = np.array([[0.0], [np.pi / 2], [np.pi], [3 * np.pi / 2]])
        traj = Trajectory(np.array([0.0]), phases)
        assert order_parameter(traj)[0] == pytest.approx(0.0, abs=1e-12)

    @given(st.lists(st.floats(0, 2 * np.pi - 1e-9), min_size=1, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_in_unit_interval(self, phases):
        traj = Trajectory(np.array([0.0]), np.array(phases)[:, None])
        r = order_parameter(traj)[0]
        assert 0.0 <= r <= 1.0 + 1e-12


def _theorem1_draws(n_draws, seed, dmin=1.0):
    """Random two-oscillator systems at the published frequency scale,
    margin > 5% from the pairwise boundary; dmin qualifies the frequency
    gap against the windowed detector's rate resolution."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n_draws:
        w1, w2 = rng.uniform(-2 * np.pi, 2 * np.pi, 2)
        if abs(w1 - w2) < dmin:
            continue
        a = rng.uniform(0.25, 2.35) * 0.5 * abs(w1 - w2)
        xi = abs(w1 - w2) / 2
        if abs(xi - a) / a <= 0.05:
            continue
        out.append((w1, w2, a))
    return out


THEOREM1_SIM = SimConfig(duration_s=20.0, sync_window=(10.0, 20.0))


def _detect_batch(draws, sim):
    from kuramoto_oed import _kernels
    B = len(draws)
    om = np.array([[w1, w2] for w1, w2, _ in draws])
    cp = np.zeros((B, 2, 2))
    cp[:, 0, 1] = cp[:, 1, 0] = [a for _, _, a in draws]
    k_lo, k_hi = sim.window_step_range()
    codes, _ = _kernels.sync_batch(om, cp, np.zeros((B, 2)), sim.step,
                                   sim.num_steps, k_lo, k_hi,
                                   sim.sync_threshold, sim.raw_increment)
    return codes == 1


class TestTheorem1Oracle:
    def test_detector_matches_analytic_condition(self):
        draws = _theorem1_draws(300, seed=2024)
        detected = _detect_batch(draws, THEOREM1_SIM)
        analytic = np.array([abs(w1 - w2) <= 2 * a for w1, w2, a in draws])
        assert (detected == analytic).mean() >= 0.99

    def test_halving_step_never_flips(self):
        draws = _theorem1_draws(200, seed=77)
        base = _detect_batch(draws, THEOREM1_SIM)
        fine = _detect_batch(draws, SimConfig(sample_rate_hz=320.0,
                                              duration_s=20.0,
                                              sync_window=(10.0, 20.0)))
        assert np.array_equal(base, fine)

    def test_batch_kernel_agrees_with_reference_path(self):
        draws = _theorem1_draws(40, seed=5)
        batch = _detect_batch(draws, THEOREM1_SIM)
        for (w1, w2, a), expect in zip(draws, batch):
            traj = integrate_rk4(two_osc(w1, w2, a), THEOREM1_SIM)
            assert detect_sync(traj, THEOREM1_SIM) == bool(expect)


def test_trajectory_csv_export(tmp_path):
    traj = integrate_rk4(two_osc(1.0, -1.0, 1.5),
                         SimConfig(duration_s=1.0, sync_window=(0.5, 1.0)))
    path = tmp_path / "traj.csv"
    export_trajectory_csv(traj, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,theta_1,theta_2"
    assert len(lines) == traj.times.shape[0] + 1
    first = [float(x) for x in lines[1].split(",")]
    assert first == [0.0, 0.0, 0.0]

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtca.channel import (SPEED_OF_LIGHT, ArrayGeometry, ClusterSet, Condition, Scenario, SubPath, Trajectory,
                          channel_response, doppler_shift, draw_cluster_set, generate_csi_block,
                          make_scenario_config, response_grid, rx_position, steering_element, steering_matrix)

angles = st.floats(-10.0, 10.0, allow_nan=False)


def single_path(alpha=1.0, tau=0.0, nu=0.0, phi0=0.0, az=0.0, el=0.0):
    p = SubPath(alpha=alpha, tau=tau, phi0=phi0, aod_azimuth=az, aod_elevation=el, gamma=0.0, nu=nu)
    return ClusterSet(clusters=[[p]], condition=Condition.NLOS, scenario_id=Scenario.UMi, seed=0)


# scenario table

@pytest.mark.parametrize("name, fc, tx", [("UMi", 2e9, (0, 0, 10)), ("UMa", 2e9, (0, 0, 25)),
                                          ("RMa", 0.7e9, (0, 0, 35))])
def test_scenario_table_values(name, fc, tx):
    cfg = make_scenario_config(name)
    assert cfg.carrier_freq == fc
    assert cfg.tx_position == tx
    assert cfg.bandwidth == 1e7
    assert cfg.num_subcarriers == 100


def test_scenario_defaults_not_in_table():
    got = {s.name: (make_scenario_config(s).delay_spread, make_scenario_config(s).angle_spread_deg,
                    make_scenario_config(s).rician_k_db) for s in Scenario}
    assert got == {"UMi": (100e-9, 20.0, 9.0), "UMa": (300e-9, 15.0, 10.0), "RMa": (50e-9, 10.0, 7.0)}


def test_scenario_overrides_and_rejection():
    assert make_scenario_config(Scenario.UMa, num_subcarriers=16).num_subcarriers == 16
    with pytest.raises(ValueError):
        make_scenario_config("UMa", colour="red")
    with pytest.raises(ValueError):
        make_scenario_config("UMa", delay_spread=0.0)


def test_subcarrier_offsets_even_and_within_band():
    cfg = make_scenario_config("UMi")
    f = cfg.subcarrier_offsets()
    assert len(f) == 100
    assert np.allclose(np.diff(f), 1e5)
    assert abs(f.mean()) < 1e-6
    assert f.min() >= -cfg.bandwidth / 2 and f.max() <= cfg.bandwidth / 2


# Doppler

def test_doppler_examples():
    assert doppler_shift(45, math.pi / 2, 2e9) == 0.0
    assert doppler_shift(45, 0.0, 0.7e9) == pytest.approx(105.07, abs=0.005)
    assert doppler_shift(0, 0.3, 2e9) == 0.0
    assert SPEED_OF_LIGHT == 299_792_458.0


@given(st.floats(0, 200), st.floats(0.1e9, 6e9), angles, st.floats(0.1, 5))
def test_doppler_linear_in_speed_and_carrier(v, fc, gamma, k):
    base = doppler_shift(v, gamma, fc)
    assert doppler_shift(k * v, gamma, fc) == pytest.approx(k * base, rel=1e-12, abs=1e-9)
    assert doppler_shift(v, gamma, k * fc) == pytest.approx(k * base, rel=1e-12, abs=1e-9)


# steering vector

def test_steering_examples():
    g = ArrayGeometry(2, 4, 0.5)
    assert steering_element(g, 1, 0.7, 1.1) == 1 + 0j
    assert steering_element(g, 2, 0.0, math.pi / 2) == pytest.approx(-1 + 0j, abs=1e-15)
    assert steering_element(g, 3, 0.0, math.pi / 2) == pytest.approx(1 + 0j, abs=1e-15)
    for bad in (0, 9):
        with pytest.raises(IndexError):
            steering_element(g, bad, 0.0, 0.0)


@given(st.integers(1, 8), angles, angles)
def test_steering_unit_modulus(k, az, el):
    assert abs(abs(steering_element(ArrayGeometry(2, 4), k, az, el)) - 1.0) < 1e-15


@given(angles, angles)
def test_steering_matrix_matches_elements(az, el):
    g = ArrayGeometry(2, 3, 0.5)
    row = steering_matrix(g, np.array([az]), np.array([el]))[0]
    expected = [steering_element(g, k + 1, az, el) for k in range(6)]
    assert np.allclose(row, expected, atol=1e-12)


def test_array_geometry_validation():
    assert ArrayGeometry(2, 3).num_elements == 6
    with pytest.raises(ValueError):
        ArrayGeometry(0, 3)
    with pytest.raises(ValueError):
        ArrayGeometry(2, 3, 0.0)


# trajectory

def test_trajectory_start_and_period():
    traj = Trajectory()
    assert traj.num_steps == 20000
    assert np.allclose(rx_position(traj, 0.0), (20, 10, 50))
    period = 2 * math.pi * traj.radius / traj.speed
    assert traj.period == pytest.approx(period)
    if period <= traj.duration:
        assert np.allclose(rx_position(traj, period), (20, 10, 50), atol=1e-9)
    with pytest.raises(ValueError):
        rx_position(traj, traj.duration + 1)
    with pytest.raises(ValueError):
        rx_position(traj, -0.1)


@given(st.floats(0, 20))
def test_trajectory_is_a_horizontal_circle(t):
    traj = Trajectory()
    pos = rx_position(traj, t)
    assert np.linalg.norm(pos[:2] - traj.center[:2]) == pytest.approx(math.hypot(20, 10), rel=1e-12)
    assert pos[2] == 50.0
    v = traj.velocity(t)
    assert np.linalg.norm(v) == pytest.approx(45.0)
    assert abs(v @ (pos - traj.center)) < 1e-6


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(speed=-1.0)
    with pytest.raises(ValueError):
        Trajectory(duration=0.0005)
    with pytest.raises(ValueError):
        Trajectory(kind="Linear")


# multipath draw

@pytest.fixture(scope="module")
def setup():
    return make_scenario_config("UMa", num_subcarriers=16), ArrayGeometry(2, 3), Trajectory()


def test_draw_is_deterministic(setup):
    cfg, g, traj = setup
    a = draw_cluster_set(cfg, Condition.LOS, g, traj, 0.1, seed=5)
    b = draw_cluster_set(cfg, Condition.LOS, g, traj, 0.1, seed=5)
    assert a.paths() == b.paths()
    assert draw_cluster_set(cfg, Condition.LOS, g, traj, 0.1, seed=6).paths() != a.paths()


@pytest.mark.parametrize("seed", range(5))
def test_nlos_powers_sum_to_one(setup, seed):
    cfg, g, traj = setup
    cs = draw_cluster_set(cfg, Condition.NLOS, g, traj, 0.0, seed)
    assert cs.direct is None
    assert len(cs.clusters) == cfg.num_clusters
    assert all(len(c) == cfg.subpaths_per_cluster for c in cs.clusters)
    assert cs.diffuse_power() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_los_direct_path_matches_k_factor(setup, seed):
    cfg, g, traj = setup
    cs = draw_cluster_set(cfg, Condition.LOS, g, traj, 0.0, seed)
    assert cs.direct is not None
    assert len(cs.paths()) == cfg.num_clusters * cfg.subpaths_per_cluster + 1
    assert cs.direct.alpha ** 2 / cs.diffuse_power() == pytest.approx(10.0, rel=1e-9)
    assert cs.direct.alpha ** 2 + cs.diffuse_power() == pytest.approx(1.0, rel=1e-9)


def test_los_direct_path_geometry(setup):
    cfg, g, traj = setup
    cs = draw_cluster_set(cfg, Condition.LOS, g, traj, 0.0, seed=1)
    link = rx_position(traj, 0.0) - np.array(cfg.tx_position)
    assert cs.direct.aod_azimuth == pytest.approx(math.atan2(link[1], link[0]))
    assert cs.direct.aod_elevation == pytest.approx(math.acos(link[2] / np.linalg.norm(link)))
    assert cs.direct.tau == pytest.approx(np.linalg.norm(link) / SPEED_OF_LIGHT)


@given(st.integers(0, 2**32 - 1), st.sampled_from(list(Condition)), st.sampled_from(list(Scenario)))
@settings(max_examples=25, deadline=None)
def test_subpath_invariants(seed, cond, scen):
    cfg = make_scenario_config(scen, num_subcarriers=4)
    traj = Trajectory.for_transmitter(cfg.tx_position)
    cs = draw_cluster_set(cfg, cond, ArrayGeometry(2, 3), traj, 1.0, seed)
    for p in cs.paths():
        assert p.alpha >= 0
        assert 0 <= p.phi0 < 2 * math.pi
        assert p.nu == doppler_shift(traj.speed, p.gamma, cfg.carrier_freq)
    taus = [c[0].tau for c in cs.clusters]
    assert taus == sorted(taus)
    assert all(len({p.tau for p in c}) == 1 for c in cs.clusters)


# channel response

def test_channel_response_examples():
    g = ArrayGeometry(2, 4)
    assert channel_response(single_path(), g, 1, 0.0, 0.0) == pytest.approx(1 + 0j, abs=1e-15)
    assert channel_response(single_path(nu=100.0), g, 1, 0.005, 0.0) == pytest.approx(-1 + 0j, abs=1e-12)
    assert channel_response(single_path(tau=1e-7), g, 1, 0.0, 5e6) == pytest.approx(-1 + 0j, abs=1e-12)
    with pytest.raises(IndexError):
        channel_response(single_path(), g, 9, 0.0, 0.0)


def test_channel_response_is_the_literal_sum(setup):
    cfg, g, traj = setup
    cs = draw_cluster_set(cfg, Condition.LOS, g, traj, 0.0, seed=3)
    t, f, k = 0.0123, 1.5e6, 4
    expected = sum(p.alpha * cmath.exp(1j * (2 * math.pi * (p.nu * t - f * p.tau) + p.phi0))
                   * steering_element(g, k, p.aod_azimuth, p.aod_elevation) for p in cs.paths())
    got = channel_response(cs, g, k, t, f)
    assert abs(got - expected) <= 1e-12 * max(1.0, abs(expected))


def test_vectorised_grid_matches_literal(setup):
    cfg, g, traj = setup
    cs = draw_cluster_set(cfg, Condition.LOS, g, traj, 0.0, seed=4)
    times = np.array([0.0, 0.001, 0.0173])
    freqs = cfg.subcarrier_offsets()[[0, 7, 15]]
    grid = response_grid(cs, g, times, freqs)
    for k in range(g.num_elements):
        for i, t in enumerate(times):
            for j, f in enumerate(freqs):
                ref = channel_response(cs, g, k + 1, t, f)
                assert abs(grid[k, i, j] - ref) <= 1e-12 * max(1.0, abs(ref))


def test_frequency_flat_when_all_delays_zero(setup):
    cfg, g, traj = setup
    cs = draw_cluster_set(cfg, Condition.NLOS, g, traj, 0.0, seed=9)
    flat = ClusterSet(clusters=[[SubPath(**{**p.__dict__, "tau": 0.0}) for p in c] for c in cs.clusters],
                      condition=cs.condition, scenario_id=cs.scenario_id, seed=cs.seed)
    freqs = cfg.subcarrier_offsets()
    for t in (0.0, 0.01):
        mags = [abs(channel_response(flat, g, 2, t, f)) for f in freqs[::5]]
        assert max(mags) - min(mags) <= 1e-12


def test_power_conservation_over_random_phases():
    rng = np.random.default_rng(0)
    alphas = rng.uniform(0.1, 1.0, size=12)
    g = ArrayGeometry(2, 3)
    draws = 10_000
    phases = rng.uniform(0, 2 * np.pi, size=(draws, len(alphas)))
    # same fixed-amplitude path set, phases redrawn per realisation
    powers = np.empty(draws)
    for i in range(draws):
        paths = [SubPath(alpha=a, tau=1e-7 * j, phi0=ph, aod_azimuth=0.3 * j, aod_elevation=1.0, gamma=0.0,
                         nu=10.0 * j) for j, (a, ph) in enumerate(zip(alphas, phases[i]))]
        cs = ClusterSet([paths], Condition.NLOS, Scenario.UMi, 0)
        powers[i] = abs(channel_response(cs, g, 3, 0.002, 1e6)) ** 2
    assert powers.mean() == pytest.approx(np.sum(alphas ** 2), rel=0.02)


def test_los_is_less_frequency_selective_than_nlos():
    cfg = make_scenario_config("UMi", num_subcarriers=16)
    g, traj = ArrayGeometry(2, 3), Trajectory.for_transmitter(cfg.tx_position)
    freqs = cfg.subcarrier_offsets()

    def selectivity(cond, seed):
        cs = draw_cluster_set(cfg, cond, g, traj, 0.0, seed)
        h = response_grid(cs, g, np.array([0.0]), freqs)
        return np.var(np.abs(h) ** 2, axis=-1).mean()

    los = np.mean([selectivity(Condition.LOS, s) for s in range(200)])
    nlos = np.mean([selectivity(Condition.NLOS, s) for s in range(200)])
    assert los < nlos


# CSI blocks

def test_block_shape_and_determinism(setup):
    cfg, g, traj = setup
    a = generate_csi_block(cfg, Condition.NLOS, g, traj, seed=11, num_time_steps=400)
    b = generate_csi_block(cfg, Condition.NLOS, g, traj, seed=11, num_time_steps=400)
    assert a.values.shape == (6, 400, 16)
    assert a.values.tobytes() == b.values.tobytes()
    assert (a.scenario_label, a.condition_label, a.seed) == (Scenario.UMa, Condition.NLOS, 11)


def test_full_scale_block_shape_is_consistent():
    # the full 8 x 20000 x 100 block is too heavy for a unit test; check the
    # shape contract on the full array and carrier grid over a short span
    cfg = make_scenario_config("UMi")
    traj = Trajectory.for_transmitter(cfg.tx_position)
    assert traj.num_steps == 20000
    blk = generate_csi_block(cfg, Condition.LOS, ArrayGeometry(2, 4), traj, seed=0, num_time_steps=50)
    assert blk.values.shape == (8, 50, 100)
    with pytest.raises(ValueError):
        generate_csi_block(cfg, Condition.LOS, ArrayGeometry(2, 4), traj, seed=0, num_time_steps=20001)

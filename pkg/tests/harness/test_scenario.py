import copy

import numpy as np
import pytest

from map_vio.scenario import (
    build_map,
    build_scenario,
    change_regions,
    noise_from_config,
    trajectory_spec,
)


def test_same_seed_gives_identical_streams(short_config):
    """Two builds of one seed produce the same readings and observations."""
    a = build_scenario(short_config, 4)
    b = build_scenario(short_config, 4)
    assert len(a.imu) == len(b.imu)
    for sa, sb in zip(a.imu, b.imu):
        np.testing.assert_array_equal(sa.omega_m, sb.omega_m)
        np.testing.assert_array_equal(sa.accel_m, sb.accel_m)
    assert [f.t for f in a.frames] == [f.t for f in b.frames]
    for fa, fb in zip(a.frames, b.frames):
        assert sorted(fa.observations) == sorted(fb.observations)


def test_scene_is_shared_across_run_seeds(short_config):
    """Run seeds change the noise but not the scene."""
    a = build_scenario(short_config, 0)
    b = build_scenario(short_config, 1)
    np.testing.assert_array_equal(a.map_model.positions, b.map_model.positions)
    assert not np.array_equal(a.imu[-1].accel_m, b.imu[-1].accel_m)


def test_scene_seed_changes_the_map(short_config):
    """Another scene seed draws other landmarks."""
    other = copy.deepcopy(short_config)
    other["Scenario"]["SceneSeed"] = 7
    assert not np.array_equal(build_map(short_config).positions, build_map(other).positions)


def test_disabled_noise_gives_exact_readings(short_config):
    """Without noise the biases stay zero and seeds do not matter."""
    cfg = copy.deepcopy(short_config)
    cfg["Noise"]["Enabled"] = False
    a = build_scenario(cfg, 0)
    b = build_scenario(cfg, 9)
    assert not a.noisy
    np.testing.assert_array_equal(a.truth.bg, 0.0)
    np.testing.assert_array_equal(a.imu[10].accel_m, b.imu[10].accel_m)


def test_frames_follow_camera_rate(short_config):
    """Frames are spaced by the camera period and carry observations."""
    s = build_scenario(short_config, 0)
    dt = np.diff([f.t for f in s.frames])
    np.testing.assert_allclose(dt, 1.0 / short_config["Camera"]["Rate"], atol=1e-9)
    assert sum(len(f.observations) for f in s.frames) > 0


def test_unchanged_environment_shares_world(short_config):
    """Without environment change the world is the prior map."""
    s = build_scenario(short_config, 0)
    assert change_regions(short_config) == ()
    assert s.world is s.map_model


def test_environment_change_moves_landmarks(short_config):
    """With environment change the captured world differs from the map."""
    cfg = copy.deepcopy(short_config)
    cfg["Scenario"]["EnvironmentChange"] = True
    s = build_scenario(cfg, 0)
    assert len(change_regions(cfg)) == 1
    assert s.world is not s.map_model
    assert s.world.boards
    assert not np.array_equal(s.world.positions, s.map_model.positions)


def test_config_sections_map_to_models(short_config):
    """Trajectory and noise models take their values from the config."""
    spec = trajectory_spec(short_config, 3)
    assert spec.seed == 3
    assert spec.duration == pytest.approx(3.0)
    noise = noise_from_config(short_config)
    assert noise.sigma_px == pytest.approx(short_config["Camera"]["PixelNoise"])
    assert noise.sigma_r == pytest.approx(short_config["Filter"]["RenderedNoise"])

import json

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from thz_aoa.esprit import SnapshotMatrix, virtual_steering
from thz_aoa.geometry import UpaGeometry, VirtualAngles, virtual_to_physical
from thz_aoa.harness.campaign import (
    CSV_COLUMNS,
    aggregate,
    rmse,
    rows_to_csv,
    run_campaign,
    trial_seed,
    trials_to_jsonl,
)
from thz_aoa.harness.config import (
    PRESETS,
    SCHEMA_VERSION,
    ConfigError,
    SimConfig,
    dump_config,
    from_mapping,
    load_config,
    preset,
)
from thz_aoa.harness.oracle import crosscheck, grid_oracle
from thz_aoa.harness.scenario import allocate_subcarriers, draw_scenario, link_angles


# ---------------------------------------------------------------- allocation

def test_allocation_examples():
    assert list(allocate_subcarriers(8, 2, 1)) == [1, 3, 5, 7]
    assert list(allocate_subcarriers(8, 2, 2)) == [2, 4, 6, 8]
    assert [len(allocate_subcarriers(2048, 2, l)) for l in (1, 2)] == [1024, 1024]
    with pytest.raises(ValueError):
        allocate_subcarriers(10, 3, 1)
    with pytest.raises(ValueError):
        allocate_subcarriers(8, 2, 3)


@given(st.integers(1, 8), st.integers(1, 40))
def test_allocation_partitions(L, per):
    K = L * per
    sets = [allocate_subcarriers(K, L, l) for l in range(1, L + 1)]
    joined = np.sort(np.concatenate(sets))
    np.testing.assert_array_equal(joined, np.arange(1, K + 1))
    assert all(len(s) == per for s in sets)


# ---------------------------------------------------------------- rmse

def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([5.0], [3.0]) == pytest.approx(2.0)
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
    assert rmse([[0.0, 0.0], [0.0, 0.0]], [[3.0, 4.0], [0.0, 0.0]]) == pytest.approx(np.sqrt(12.5 / 2))
    with pytest.raises(ValueError):
        rmse([], [])
    with pytest.raises(ValueError):
        rmse([1.0, 2.0], [1.0])


# ---------------------------------------------------------------- scenario

def test_broadside_geometry():
    assert link_angles(0.0, 0.0, 1.3, 200e3) == (0.0, 0.0, 0.0, 0.0)


def test_scenario_is_deterministic():
    cfg = preset("tiny")
    a = draw_scenario(cfg, trial_seed(5, 1, 2))
    b = draw_scenario(cfg, trial_seed(5, 1, 2))
    c = draw_scenario(cfg, trial_seed(5, 1, 3))
    assert a == b and a != c


def test_scenario_ranges():
    cfg = preset("tiny", angle_max_deg=60.0)
    rng_seed = np.random.SeedSequence(0)
    worst, worst_offset = 0.0, 0.0
    for child in rng_seed.spawn(5000):
        for lk in draw_scenario(cfg, child):
            truth = virtual_to_physical(lk.uav_angles) + virtual_to_physical(lk.sat_angles)
            prior = virtual_to_physical(lk.uav_prior) + virtual_to_physical(lk.sat_prior)
            worst = max(worst, max(abs(x) for x in truth))
            worst_offset = max(worst_offset, max(abs(p - t) for p, t in zip(prior, truth)))
            assert 0 <= lk.delay <= cfg.n_cp / cfg.f_s
    assert worst <= 60.0
    assert worst_offset <= 5.0 + 1e-9


def test_narrow_angle_range_forces_redraws():
    cfg = preset("tiny", angle_max_deg=5.0)
    for child in np.random.SeedSequence(1).spawn(200):
        for lk in draw_scenario(cfg, child):
            for v in (lk.uav_angles, lk.sat_angles):
                assert max(abs(x) for x in virtual_to_physical(v)) <= 5.0


# ---------------------------------------------------------------- config

def test_full_scale_defaults():
    c = SimConfig()
    assert (c.f_z, c.f_s, c.K, c.n_cp) == (0.1e12, 1e9, 2048, 128)
    assert (c.uav_h, c.uav_v, c.sat_sub_h, c.sat_sub_v) == (200, 200, 200, 200)
    assert (c.sat_panels_h, c.sat_panels_v, c.n_uav) == (1, 2, 2)
    assert (c.uav_virtual_h, c.uav_virtual_v, c.sat_virtual_h, c.sat_virtual_v) == (5, 5, 5, 5)
    assert (c.uav_group_h, c.sat_group_v) == (5, 5)
    assert (c.angle_max_deg, c.prior_offset_deg) == (60.0, 5.0)
    assert c.delay_max == pytest.approx(128e-9)
    assert preset("full") == c == preset("paper")
    np.testing.assert_array_equal(c.snr_points, [10, 15, 20, 25, 30])


def test_presets_are_valid():
    for name in PRESETS:
        preset(name)
    d = preset("desk")
    assert (d.uav_h, d.K, d.uav_group_h, d.n_uav, d.trials) == (64, 256, 4, 2, 500)


@pytest.mark.parametrize("changes,msg", [
    (dict(K=255), "divisible"),
    (dict(uav_group_h=5, uav_h=64), "tile"),
    (dict(uav_virtual_h=1), "virtual"),
    (dict(mode="magic"), "mode"),
    (dict(n_uav=3), "panel"),
    (dict(seed=-1), "seed"),
    (dict(snr_step_db=0.0), "SNR"),
    (dict(f_s=3e11), "f_s"),
])
def test_config_errors(changes, msg):
    with pytest.raises(ConfigError, match=msg):
        preset("desk", **changes)


def test_mapping_rules():
    with pytest.raises(ConfigError, match="unknown config keys: bogus"):
        from_mapping({"schema_version": SCHEMA_VERSION, "bogus": 1})
    with pytest.raises(ConfigError, match="schema_version"):
        from_mapping({"trials": 3})
    with pytest.raises(ConfigError, match="schema_version"):
        from_mapping({"schema_version": 99})
    with pytest.raises(ConfigError, match="trials"):
        from_mapping({"schema_version": 1, "trials": 2.5})
    with pytest.raises(ConfigError, match="unknown preset"):
        from_mapping({"schema_version": 1, "preset": "huge"})
    c = from_mapping({"schema_version": 1, "preset": "tiny", "trials": 7, "delay_max_s": None})
    assert c.trials == 7 and c.uav_h == 16


def test_yaml_round_trip(tmp_path):
    cfg = preset("tiny", trials=3, mode="no_ttdu")
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg
    path.write_text("schema_version: 1\npreset: desk\nK: [1, 2\n")
    with pytest.raises(ConfigError, match="malformed"):
        load_config(path)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")


# ---------------------------------------------------------------- grid oracle

def test_grid_oracle_noiseless():
    v = VirtualAngles(0.913, -1.777)
    y = SnapshotMatrix(np.outer(virtual_steering(v, 5, 5), np.exp(1j * np.arange(40))), UpaGeometry(5, 5))
    g = grid_oracle(y, resolution=0.05)
    assert g.final_resolution == pytest.approx(5e-5)
    assert abs(g.mu - v.mu) < g.final_resolution and abs(g.nu - v.nu) < g.final_resolution
    assert not g.low_confidence
    with pytest.raises(ValueError):
        grid_oracle(y, resolution=0.0)


def test_grid_oracle_is_deterministic_and_flags_noise(rng):
    noise = SnapshotMatrix(rng.normal(size=(25, 30)) + 1j * rng.normal(size=(25, 30)), UpaGeometry(5, 5))
    a, b = grid_oracle(noise), grid_oracle(noise)
    assert a == b
    assert a.low_confidence


def test_crosscheck_noiseless_limit():
    chk = crosscheck(preset("tiny"), instances=10, snr_db=200.0, resolution=0.05)
    assert chk.agree
    np.testing.assert_allclose(chk.esprit, chk.truth, atol=1e-9)


# ---------------------------------------------------------------- campaign

def test_near_noiseless_campaign():
    result = run_campaign(preset("tiny", snr_min_db=60, snr_max_db=60, trials=20))
    row = result.rows[0]
    for name in ("rmse_theta_uav_deg", "rmse_phi_uav_deg", "rmse_theta_sat_deg", "rmse_phi_sat_deg"):
        assert 0 <= getattr(row, name) < 1e-3
    assert row.trials == 20 and row.flagged_fraction == 0.0
    assert row.crlb_theta_deg > 0 and row.crlb_phi_sat_deg > 0


def test_campaign_csv_format_and_determinism():
    cfg = preset("tiny", snr_min_db=10, snr_max_db=20, snr_step_db=10, trials=6, seed=9)
    a = run_campaign(cfg)
    b = run_campaign(cfg, workers=2)
    text = rows_to_csv(a.rows)
    assert text == rows_to_csv(b.rows)
    lines = text.split("\n")
    assert lines[0].split(",") == CSV_COLUMNS
    assert CSV_COLUMNS[:9] == ["snr_db", "rmse_theta_uav_deg", "rmse_phi_uav_deg", "rmse_theta_sat_deg",
                               "rmse_phi_sat_deg", "crlb_theta_deg", "crlb_phi_deg", "trials",
                               "flagged_fraction"]
    assert "\r" not in text and text.endswith("\n") and len(lines) == 4
    assert [float(line.split(",")[0]) for line in lines[1:3]] == [10.0, 20.0]
    records = [json.loads(line) for line in trials_to_jsonl(a.trials).splitlines()]
    assert [(r["snr_index"], r["trial"]) for r in records] == [(s, t) for s in range(2) for t in range(6)]


def test_aggregation_is_order_independent():
    cfg = preset("tiny", snr_min_db=15, snr_max_db=15, trials=8)
    res = run_campaign(cfg)
    shuffled = list(reversed(res.trials))
    assert aggregate(cfg, shuffled) == res.rows


def test_failures_are_counted_and_clamped():
    cfg = preset("tiny", snr_min_db=20, snr_max_db=20, trials=4, min_eig_ratio=1e9)
    res = run_campaign(cfg)
    assert res.failure_rate == 1.0
    assert res.rows[0].flagged_fraction == 1.0
    assert np.isfinite(res.rows[0].rmse_theta_uav_deg)


def test_per_trial_iterations_recorded():
    cfg = preset("tiny", snr_min_db=20, snr_max_db=20, trials=3, i_max_uav=3)
    res = run_campaign(cfg)
    lk = res.trials[0].links[0]
    assert len(lk.uav_iterations) == 3 and len(lk.sat_iterations) == 2
    assert res.errors(0, iteration=1).shape == (6, 4)
    assert res.efficiency(0).shape == (4,)


def test_dump_is_plain_yaml():
    data = yaml.safe_load(dump_config(preset("desk")))
    assert data["schema_version"] == SCHEMA_VERSION and data["K"] == 256


# ---------------------------------------------------------------- campaign-level properties

@pytest.fixture(scope="module")
def ideal_tiny_campaign():
    return run_campaign(preset("tiny", mode="ideal_ttdu", trials=500))


RMSE_COLUMNS = ("rmse_theta_uav_deg", "rmse_phi_uav_deg", "rmse_theta_sat_deg", "rmse_phi_sat_deg")
CRLB_COLUMNS = ("crlb_theta_deg", "crlb_phi_deg", "crlb_theta_sat_deg", "crlb_phi_sat_deg")


def rmse_standard_error(result, snr_index):
    """Delta-method standard error of each RMSE column."""
    per_trial = np.array([[np.mean([(lk.estimate[a] - lk.truth[a]) ** 2 for lk in t.links]) for a in range(4)]
                          for t in result.trials if t.snr_index == snr_index])
    mse = per_trial.mean(axis=0)
    return per_trial.std(axis=0, ddof=1) / np.sqrt(len(per_trial)) / (2 * np.sqrt(mse))


def test_rmse_monotone_in_snr(ideal_tiny_campaign):
    rows = ideal_tiny_campaign.rows
    for a, col in enumerate(RMSE_COLUMNS):
        for i in range(1, len(rows)):
            prev, cur = getattr(rows[i - 1], col), getattr(rows[i], col)
            slack = 2 * np.hypot(rmse_standard_error(ideal_tiny_campaign, i - 1)[a],
                                 rmse_standard_error(ideal_tiny_campaign, i)[a])
            assert cur <= prev + slack, f"{col} rises from {prev:.3g} to {cur:.3g} at {rows[i].snr_db} dB"


def test_rmse_dominates_crlb(ideal_tiny_campaign):
    for row in ideal_tiny_campaign.rows:
        for r, c in zip(RMSE_COLUMNS, CRLB_COLUMNS):
            assert getattr(row, r) >= 0.9 * getattr(row, c), f"{r} below 0.9 sqrt(CRLB) at {row.snr_db} dB"


def test_satellite_not_worse_than_uav(ideal_tiny_campaign):
    for row in ideal_tiny_campaign.rows:
        assert row.rmse_theta_sat_deg <= row.rmse_theta_uav_deg
        assert row.rmse_phi_sat_deg <= row.rmse_phi_uav_deg

"""Acceptance criteria, each at its stated tolerance.

Every test reports one PASS/FAIL line through ``acceptance_report``; the lines
are repeated in the terminal summary under "acceptance criteria".
"""
import dataclasses
import time

import numpy as np
import pytest
from scipy import stats

from oracles import dense_channel
from thz_aoa.crlb import crlb_single_source, fisher_information
from thz_aoa.channel import dl_channel_factors, ul_channel_factors
from thz_aoa.estimator import estimate_sat_stage, estimate_uav_stage
from thz_aoa.geometry import SubcarrierGrid, UpaGeometry, VirtualAngles, physical_to_virtual, virtual_to_physical
from thz_aoa.harness.campaign import ANGLES, rows_to_csv, run_campaign, scenario_seed, trial_seed
from thz_aoa.harness.cli import main
from thz_aoa.harness.config import preset
from thz_aoa.harness.oracle import crosscheck
from thz_aoa.harness.scenario import allocate_subcarriers, draw_scenario
from thz_aoa.rf_frontend import CompensationPlan

RMSE_COLUMNS = ("rmse_theta_uav_deg", "rmse_phi_uav_deg", "rmse_theta_sat_deg", "rmse_phi_sat_deg")
CRLB_COLUMNS = ("crlb_theta_deg", "crlb_phi_deg", "crlb_theta_sat_deg", "crlb_phi_sat_deg")
DESK_SEED = 42


@pytest.fixture(scope="session")
def desk_campaign():
    """``run --preset desk --seed 42`` with one worker: proposed mode, i_max = 2, 500 trials."""
    cfg = preset("desk", seed=DESK_SEED)
    t0 = time.perf_counter()
    result = run_campaign(cfg, workers=1)
    return result, time.perf_counter() - t0


def with_exact_priors(links):
    return [dataclasses.replace(lk, uav_prior=lk.uav_angles, sat_prior=lk.sat_angles) for lk in links]


def test_criterion_01_noiseless_exactness(acceptance_report):
    cfg = preset("tiny", mode="ideal_ttdu")
    model = cfg.system_model(0.0)
    combs = [allocate_subcarriers(cfg.K, cfg.n_uav, l + 1) for l in range(cfg.n_uav)]
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(20):
        seed = trial_seed(0, 0, trial)
        links = with_exact_priors(draw_scenario(cfg, scenario_seed(seed)))
        dl = estimate_uav_stage(links, model, combs, seed)
        ul = estimate_sat_stage(links, [r.trace[0].virtual for r in dl], model, combs, seed)
        for lk, d, u in zip(links, dl, ul):
            truth = virtual_to_physical(lk.uav_angles) + virtual_to_physical(lk.sat_angles)
            got = (d.trace[0].theta_deg, d.trace[0].phi_deg, u.trace[0].theta_deg, u.trace[0].phi_deg)
            worst = max(worst, max(abs(a - b) for a, b in zip(got, truth)))
    elapsed = time.perf_counter() - t0
    passed = worst < 1e-6 and elapsed < 5.0
    acceptance_report(1, passed, f"noiseless tiny, iteration 1: max error {worst:.2e} deg "
                                 f"(< 1e-6), runtime {elapsed:.2f} s (< 5 s), 20 trials x 2 UAVs")
    assert passed


def test_criterion_02_factored_channel_oracle(acceptance_report):
    grid = SubcarrierGrid(K=16, f_z=0.1e12, f_s=1e9, n_cp=4)
    cfg = preset("tiny")
    worst = 0.0
    for n in (4, 8):
        g = UpaGeometry(n, n)
        for lk in draw_scenario(cfg, np.random.SeedSequence(n)):
            lk = dataclasses.replace(lk, gain=1.3)
            cu = CompensationPlan("gttdu", lk.uav_prior, 2, 2)
            cs = CompensationPlan("gttdu", lk.sat_prior, 2, 2)
            for k in range(1, 17):
                for m in (1, 4):
                    h = dl_channel_factors(lk, k, m, grid, g, g, cu, cs, 200.0)
                    ref = dense_channel(lk, k, m, grid, g, g, cu, cs, 200.0)
                    worst = max(worst, float(np.abs(h.dense() - ref).max()))
                    ul = ul_channel_factors(lk, k, m, grid, g, g, cu, cs, 200.0)
                    ul_ref = h.coeff * np.outer(h.s_side.dense(), h.u_side.dense().conj())
                    worst = max(worst, float(np.abs(ul.dense() - ul_ref).max()))
    passed = worst <= 1e-12
    acceptance_report(2, passed, f"factored vs dense channel on 4x4 and 8x8, 16 subcarriers: "
                                 f"max |diff| {worst:.1e} (<= 1e-12)")
    assert passed


def test_criterion_03_perfect_compensation(acceptance_report):
    cfg = preset("desk")
    g_u, g_s, grid = cfg.uav_geom, cfg.sat_geom, cfg.grid
    worst = 0.0
    for lk in with_exact_priors(draw_scenario(cfg, np.random.SeedSequence(3))):
        cu = CompensationPlan("ideal_ttdu", lk.uav_prior)
        cs = CompensationPlan("ideal_ttdu", lk.sat_prior)
        ref = dl_channel_factors(lk, 1, 1, grid, g_u, g_s, cu, cs)
        u0, s0 = ref.u_side.dense(), ref.s_side.dense()
        for k in range(2, grid.K + 1):
            h = dl_channel_factors(lk, k, 1, grid, g_u, g_s, cu, cs)
            worst = max(worst, float(np.abs(h.u_side.dense() - u0).max()),
                        float(np.abs(h.s_side.dense() - s0).max()))
    passed = worst <= 1e-10
    acceptance_report(3, passed, f"ideal TTDU with exact priors, K={grid.K}, 64x64 UAV / 64x128 satellite: "
                                 f"max response change across subcarriers {worst:.1e} (<= 1e-10)")
    assert passed


def test_criterion_04_crlb_tightness(desk_campaign, acceptance_report):
    result, elapsed = desk_campaign
    details, passed = [], elapsed <= 600.0
    for row in result.rows:
        if row.snr_db < 15:
            continue
        ratios = [getattr(row, r) / getattr(row, c) for r, c in zip(RMSE_COLUMNS, CRLB_COLUMNS)]
        passed &= all(1 / 1.5 <= x <= 1.5 for x in ratios)
        details.append(f"{row.snr_db:g}dB:" + "/".join(f"{x:.2f}" for x in ratios))
    eff = " ".join(f"{row.snr_db:g}dB:" + "/".join(f"{x:.2f}" for x in result.efficiency(i))
                   for i, row in enumerate(result.rows) if row.snr_db >= 15)
    acceptance_report(4, passed, "RMSE/sqrt(CRLB) (theta_U/phi_U/theta_S/phi_S) in [1/1.5, 1.5] at SNR >= 15 dB: "
                                 + " ".join(details) + f"; runtime {elapsed:.0f} s (<= 600 s); "
                                 + f"for reference, per-trial sqrt(mean(err^2/CRLB)): {eff}")
    assert passed


def test_criterion_05_error_floor(desk_campaign, acceptance_report):
    proposed, _ = desk_campaign
    cfg = preset("desk", seed=DESK_SEED, mode="no_ttdu")
    last = len(cfg.snr_points) - 1
    baseline = run_campaign(cfg, snr_indices=[0, last])
    lo_p, hi_p = proposed.rows[0], proposed.rows[-1]
    lo_b, hi_b = baseline.rows[0], baseline.rows[-1]
    assert (lo_p.snr_db, hi_p.snr_db, lo_b.snr_db, hi_b.snr_db) == (10.0, 30.0, 10.0, 30.0)
    gain_p = [getattr(lo_p, c) / getattr(hi_p, c) for c in RMSE_COLUMNS]
    gain_b = [getattr(lo_b, c) / getattr(hi_b, c) for c in RMSE_COLUMNS]
    passed = all(g < 2 for g in gain_b) and all(g > 5 for g in gain_p)
    acceptance_report(5, passed, "RMSE(10 dB)/RMSE(30 dB) theta_U/phi_U/theta_S/phi_S: no_ttdu "
                                 + "/".join(f"{g:.2f}" for g in gain_b) + " (each < 2), proposed "
                                 + "/".join(f"{g:.2f}" for g in gain_p) + " (each > 5)")
    assert passed


def test_criterion_06_iteration_benefit(acceptance_report):
    cfg = preset("desk", seed=DESK_SEED, i_max_uav=3, i_max_sat=3)
    snr_index = int(np.flatnonzero(cfg.snr_points == 20.0)[0])
    result = run_campaign(cfg, snr_indices=[snr_index])
    e = [np.abs(result.errors(snr_index, iteration=i)) for i in (1, 2, 3)]
    passed, details = True, []
    for col, name in enumerate(ANGLES):
        p_value = stats.ttest_rel(e[1][:, col], e[0][:, col], alternative="greater").pvalue
        m1, m2, m3 = (float(np.mean(x[:, col])) for x in e)
        further = (m2 - m3) / m2
        passed &= p_value > 0.05 and further < 0.10
        details.append(f"{name}: mean|e| {m1:.3g}->{m2:.3g}->{m3:.3g} deg, p(e2>e1)={p_value:.2f}, "
                       f"iter-3 gain {100 * further:.2f}%")
    acceptance_report(6, passed, f"desk, 20 dB, {cfg.trials} trials, GTTDU, +/-5 deg priors: " + "; ".join(details))
    assert passed


def test_criterion_07_stage_ordering(desk_campaign, acceptance_report):
    result, _ = desk_campaign
    passed, details = True, []
    for row in result.rows:
        ok = row.rmse_theta_sat_deg <= row.rmse_theta_uav_deg and row.rmse_phi_sat_deg <= row.rmse_phi_uav_deg
        passed &= ok
        details.append(f"{row.snr_db:g}dB theta {row.rmse_theta_sat_deg:.3g}<={row.rmse_theta_uav_deg:.3g} "
                       f"phi {row.rmse_phi_sat_deg:.3g}<={row.rmse_phi_uav_deg:.3g}")
    acceptance_report(7, passed, "satellite RMSE <= UAV RMSE per angle: " + "; ".join(details))
    assert passed


def test_criterion_08_esprit_oracle_equivalence(acceptance_report):
    check = crosscheck(preset("tiny"), instances=100, snr_db=20.0, resolution=0.05, seed=0)
    gap = np.abs(check.esprit - check.grid)
    esprit_rms = np.sqrt(np.mean((check.esprit - check.truth) ** 2))
    passed = check.agree
    acceptance_report(8, passed, f"100 tiny instances at 20 dB: max |ESPRIT - grid| mu {gap[:, 0].max():.2e}, "
                                 f"nu {gap[:, 1].max():.2e} rad vs final grid resolution "
                                 f"{check.final_resolution:.1e} rad (ESPRIT RMS error {esprit_rms:.1e} rad)")
    assert passed


def test_criterion_09_crlb_internal_checks(acceptance_report):
    v = physical_to_virtual(20.0, -10.0)
    snr_db = np.linspace(0.0, 30.0, 31)
    var = np.array([crlb_single_source(v, 1.0, 10 ** (-s / 10), 5, 5, 128).var_mu for s in snr_db])
    slope = float(np.polyfit(snr_db / 10, np.log10(var), 1)[0])
    ratio = crlb_single_source(v, 1.0, 0.1, 5, 5, 64).var_theta_deg2 / crlb_single_source(
        v, 1.0, 0.1, 5, 5, 256).var_theta_deg2
    grid = np.linspace(-0.9 * np.pi, 0.9 * np.pi, 9)
    min_eig = min(float(np.linalg.eigvalsh(fisher_information(VirtualAngles(mu, nu), 1.0, 0.1, 5, 5,
                                                                np.ones(64))).min()) for mu in grid for nu in grid)
    passed = abs(slope + 1.0) <= 0.01 and abs(ratio - 4.0) <= 1e-12 and min_eig >= 0.0
    acceptance_report(9, passed, f"log-log slope vs SNR over 3 decades {slope:.6f} (-1 +/- 0.01), "
                                 f"var(K_l=64)/var(K_l=256) = {ratio:.15f} (exactly 4), "
                                 f"min FIM eigenvalue on 9x9 grid {min_eig:.3e} (>= 0)")
    assert passed


def test_criterion_10_determinism(desk_campaign, tmp_path, acceptance_report):
    result, _ = desk_campaign
    single = rows_to_csv(result.rows).encode()
    out = tmp_path / "workers2.csv"
    code = main(["run", "--preset", "desk", "--seed", str(DESK_SEED), "--workers", "2", "--out", str(out)])
    parallel = out.read_bytes()
    passed = code == 0 and parallel == single
    acceptance_report(10, passed, f"run --preset desk --seed {DESK_SEED}: --workers 1 and --workers 2 CSVs "
                                  f"{'byte-identical' if parallel == single else 'differ'} ({len(single)} bytes)")
    assert passed

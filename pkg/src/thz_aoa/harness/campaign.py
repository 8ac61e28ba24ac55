"""Monte-Carlo RMSE-versus-SNR campaigns.

Seeding: trial ``t`` of SNR point ``s`` uses
``SeedSequence(entropy=master_seed, spawn_key=(s, t))``; the scenario, the
DL stage of link ``l`` and the UL stage of link ``l`` draw from children
keyed ``(s, t, 2)``, ``(s, t, 0, l)`` and ``(s, t, 1, l)``. Results therefore
do not depend on worker count or scheduling order.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..crlb import UnidentifiableError, crlb_single_source
from ..estimator import StageResult, estimate_sat_stage, estimate_uav_stage
from ..geometry import virtual_to_physical
from .config import SimConfig
from .scenario import allocate_subcarriers, draw_scenario

log = logging.getLogger(__name__)

SCENARIO_KEY = 2
ANGLES = ("theta_uav", "phi_uav", "theta_sat", "phi_sat")


def trial_seed(master: int, snr_index: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(snr_index, trial))


def scenario_seed(seed: np.random.SeedSequence) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (SCENARIO_KEY,))


def rmse(true_angles, estimates) -> float:
    """``sqrt(mean_trials((1/L) sum_l (x_l - x_hat_l)^2))``; inputs are (trials, L) or (L,)."""
    x = np.atleast_2d(np.asarray(true_angles, dtype=float))
    x_hat = np.atleast_2d(np.asarray(estimates, dtype=float))
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    if x.size == 0:
        raise ValueError("rmse of an empty set")
    per_trial = np.mean((x - x_hat) ** 2, axis=1)
    return float(np.sqrt(np.mean(per_trial)))


@dataclass
class LinkRecord:
    truth: list[float]                       # theta_U, phi_U, theta_S, phi_S (deg)
    estimate: list[float]
    uav_iterations: list[list[float]]        # per iteration [theta, phi]
    sat_iterations: list[list[float]]
    crlb_deg2: list[float]                   # theta_U, phi_U, theta_S, phi_S
    gains: list[float]                       # effective noiseless amplitude, DL then UL
    flagged: bool
    failed: bool
    gamma_hat: list[float] = field(default_factory=list)   # |gamma_hat| per stage


@dataclass
class TrialRecord:
    snr_index: int
    trial: int
    snr_db: float
    links: list[LinkRecord]

    @property
    def flagged(self) -> bool:
        return any(lk.flagged or lk.failed for lk in self.links)

    @property
    def failed(self) -> bool:
        return any(lk.failed for lk in self.links)


@dataclass(frozen=True)
class RmseRow:
    snr_db: float
    rmse_theta_uav_deg: float
    rmse_phi_uav_deg: float
    rmse_theta_sat_deg: float
    rmse_phi_sat_deg: float
    crlb_theta_deg: float
    crlb_phi_deg: float
    trials: int
    flagged_fraction: float
    crlb_theta_sat_deg: float
    crlb_phi_sat_deg: float


CSV_COLUMNS = [f.name for f in fields(RmseRow)]


@dataclass
class CampaignResult:
    config: SimConfig
    rows: list[RmseRow]
    trials: list[TrialRecord]

    @property
    def failure_rate(self) -> float:
        return float(np.mean([t.failed for t in self.trials])) if self.trials else 0.0

    def errors(self, snr_index: int, iteration: int | None = None) -> np.ndarray:
        """Signed errors (deg), shape (trials * L, 4), columns as :data:`ANGLES`.

        ``iteration`` (1-based) selects an intermediate iterate of the refinement loop;
        ``None`` gives the final estimates.
        """
        out = []
        for t in self.trials:
            if t.snr_index != snr_index:
                continue
            for lk in t.links:
                if iteration is None:
                    est = lk.estimate
                else:
                    u = lk.uav_iterations[min(iteration, len(lk.uav_iterations)) - 1]
                    s = lk.sat_iterations[min(iteration, len(lk.sat_iterations)) - 1]
                    est = u + s
                out.append(np.subtract(est, lk.truth))
        return np.array(out)

    def crlb(self, snr_index: int) -> np.ndarray:
        return np.array([lk.crlb_deg2 for t in self.trials if t.snr_index == snr_index for lk in t.links])

    def efficiency(self, snr_index: int) -> np.ndarray:
        """Per-angle ``sqrt(mean(err^2 / CRLB))`` over links and trials."""
        e = self.errors(snr_index)
        c = self.crlb(snr_index)
        return np.sqrt(np.mean(e ** 2 / c, axis=0))


def _stage_estimates(res: StageResult) -> tuple[list[float], list[list[float]]]:
    final = res.final
    if res.trace is None:
        its = [[final.theta_deg, final.phi_deg]]
    else:
        its = [[e.theta_deg, e.phi_deg] for e in res.trace.estimates]
    return [final.theta_deg, final.phi_deg], its


def _bound(angles, gain: float, sigma2: float, i_h: int, i_v: int, k_l: int) -> tuple[float, float]:
    try:
        c = crlb_single_source(angles, gain, sigma2, i_h, i_v, k_l)
    except (UnidentifiableError, ValueError):
        return float("inf"), float("inf")
    return c.var_theta_deg2, c.var_phi_deg2


def run_trial(config: SimConfig, snr_index: int, trial: int) -> TrialRecord:
    snr_db = float(config.snr_points[snr_index])
    sigma2 = config.alpha_variance / 10 ** (snr_db / 10)
    seed = trial_seed(config.seed, snr_index, trial)
    links = draw_scenario(config, scenario_seed(seed))
    model = config.system_model(np.sqrt(sigma2))
    L = config.n_uav
    combs = [allocate_subcarriers(config.K, L, l + 1) for l in range(L)]

    dl = estimate_uav_stage(links, model, combs, seed)
    refined = [r.final.virtual for r in dl]
    ul = estimate_sat_stage(links, refined, model, combs, seed)

    records = []
    for lk, d, u, ks in zip(links, dl, ul, combs):
        truth = list(virtual_to_physical(lk.uav_angles) + virtual_to_physical(lk.sat_angles))
        d_final, d_its = _stage_estimates(d)
        u_final, u_its = _stage_estimates(u)
        bounds = (_bound(lk.uav_angles, d.effective_gain, sigma2, *model.uav_virtual, len(ks))
                  + _bound(lk.sat_angles, u.effective_gain, sigma2, *model.sat_virtual, len(ks)))
        gam = [abs(r.trace.final.gamma) if r.trace is not None else 0.0 for r in (d, u)]
        records.append(LinkRecord(
            truth=truth,
            estimate=d_final + u_final,
            uav_iterations=d_its,
            sat_iterations=u_its,
            crlb_deg2=list(bounds),
            gains=[d.effective_gain, u.effective_gain],
            flagged=d.final.flagged or u.final.flagged or (d.trace is not None and d.trace.flagged)
            or (u.trace is not None and u.trace.flagged),
            failed=d.failed or u.failed,
            gamma_hat=gam,
        ))
    return TrialRecord(snr_index, trial, snr_db, records)


def _run_chunk(args) -> list[TrialRecord]:
    config, tasks = args
    return [run_trial(config, s, t) for s, t in tasks]


def aggregate(config: SimConfig, trials: list[TrialRecord]) -> list[RmseRow]:
    """One row per SNR point; trials are sorted first so sums never depend on arrival order."""
    trials = sorted(trials, key=lambda t: (t.snr_index, t.trial))
    rows = []
    for s, snr_db in enumerate(config.snr_points):
        sel = [t for t in trials if t.snr_index == s]
        if not sel:
            continue
        truth = np.array([[lk.truth for lk in t.links] for t in sel])        # (T, L, 4)
        est = np.array([[lk.estimate for lk in t.links] for t in sel])
        crlb = np.array([[lk.crlb_deg2 for lk in t.links] for t in sel])
        r = [rmse(truth[:, :, a], est[:, :, a]) for a in range(4)]
        c = np.sqrt(np.mean(crlb.reshape(-1, 4), axis=0))
        rows.append(RmseRow(
            snr_db=float(snr_db),
            rmse_theta_uav_deg=r[0], rmse_phi_uav_deg=r[1],
            rmse_theta_sat_deg=r[2], rmse_phi_sat_deg=r[3],
            crlb_theta_deg=float(c[0]), crlb_phi_deg=float(c[1]),
            trials=len(sel),
            flagged_fraction=float(np.mean([t.flagged for t in sel])),
            crlb_theta_sat_deg=float(c[2]), crlb_phi_sat_deg=float(c[3]),
        ))
    return rows


def run_campaign(config: SimConfig, workers: int = 1, snr_indices=None) -> CampaignResult:
    """Run every (SNR point, trial) pair and aggregate RMSE rows ordered by SNR."""
    snr_indices = range(len(config.snr_points)) if snr_indices is None else snr_indices
    tasks = [(s, t) for s in snr_indices for t in range(config.trials)]
    if workers <= 1:
        trials = _run_chunk((config, tasks))
    else:
        n_chunks = max(workers * 4, 1)
        chunks = [tasks[i::n_chunks] for i in range(n_chunks)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = [r for part in pool.map(_run_chunk, [(config, c) for c in chunks if c]) for r in part]
    trials.sort(key=lambda t: (t.snr_index, t.trial))
    log.info("campaign finished: %d trials, failure rate %.3f", len(trials),
             float(np.mean([t.failed for t in trials])) if trials else 0.0)
    return CampaignResult(config, aggregate(config, trials), trials)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".10g")


def rows_to_csv(rows: list[RmseRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def trials_to_jsonl(trials: list[TrialRecord]) -> str:
    return "".join(json.dumps(asdict(t), sort_keys=True) + "\n" for t in trials)

"""Prior-aided iterative angle estimation and the DL (UAV) / UL (satellite) stages."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import LinkState, Observation, qpsk_pilots, synthesize_dl_observation, synthesize_ul_observation
from .esprit import EspritError, SnapshotMatrix, derotate_pilots, tdu_esprit
from .geometry import (
    SubcarrierGrid,
    UpaGeometry,
    VirtualAngles,
    clamp_to_physical,
    squint_1d,
    virtual_to_physical,
)
from .rf_frontend import (
    Block,
    CompensationPlan,
    SubarrayPattern,
    build_sat_combiners,
    build_sat_precoders,
    build_uav_combiners,
    build_uav_ul_precoder,
)

log = logging.getLogger(__name__)

DL_STAGE, UL_STAGE = 0, 1


class EstimationError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class AngleEstimate:
    theta_deg: float
    phi_deg: float
    mu: float
    nu: float
    iteration: int
    flagged: bool = False
    gamma: complex = 0j

    @property
    def virtual(self) -> VirtualAngles:
        return VirtualAngles(self.mu, self.nu)


@dataclass
class IterationTrace:
    estimates: list[AngleEstimate]

    def __len__(self) -> int:
        return len(self.estimates)

    def __getitem__(self, i: int) -> AngleEstimate:
        return self.estimates[i]

    @property
    def final(self) -> AngleEstimate:
        return self.estimates[-1]

    @property
    def flagged(self) -> bool:
        return any(e.flagged for e in self.estimates)


def _estimate_from_virtual(mu: float, nu: float, iteration: int, gamma: complex = 0j) -> AngleEstimate:
    mu, nu, clamped = clamp_to_physical(mu, nu)
    theta, phi = virtual_to_physical(VirtualAngles(mu, nu))
    return AngleEstimate(theta, phi, mu, nu, iteration, clamped, gamma)


def compensation_matrix(prior: VirtualAngles, last: VirtualAngles, i_h: int, i_v: int,
                        grid: SubcarrierGrid, subcarriers) -> np.ndarray:
    """Residual-squint model on the virtual array, one column per subcarrier.

    Column ``k`` is ``conj(squint(prior, xi_k)) * squint(last, xi_k)``, evaluated
    as one squint vector of the angle difference so that ``last == prior``
    gives exact ones.
    """
    xis = np.atleast_1d(grid.xi(np.asarray(subcarriers)))
    d_mu, d_nu = last.mu - prior.mu, last.nu - prior.nu
    cols = [np.kron(squint_1d(d_nu, i_v, xi), squint_1d(d_mu, i_h, xi)) for xi in xis]
    return np.stack(cols, axis=1)


def iterate_angles(y: SnapshotMatrix, prior: VirtualAngles, i_max: int, grid: SubcarrierGrid,
                   subcarriers, min_eig_ratio: float = 1.0) -> IterationTrace:
    """Run ``i_max`` rounds of ESPRIT, re-compensating the original ``y`` each round."""
    if i_max < 1:
        raise ValueError("i_max must be >= 1")
    g = y.virtual_geom
    estimates: list[AngleEstimate] = []
    for i in range(1, i_max + 1):
        if i == 1:
            data = y
        else:
            last = estimates[-1].virtual
            comp = compensation_matrix(prior, last, g.n_h, g.n_v, grid, subcarriers)
            data = SnapshotMatrix(np.conj(comp) * y.data, g)
        try:
            mu, nu, gamma = tdu_esprit(data, min_eig_ratio)
        except EspritError as exc:
            raise EstimationError(str(exc), i) from exc
        estimates.append(_estimate_from_virtual(mu, nu, i, gamma))
    return IterationTrace(estimates)


@dataclass(frozen=True)
class SystemModel:
    """Everything the two estimation stages need besides the links themselves."""

    uav_geom: UpaGeometry
    sat_geom: UpaGeometry
    panels: tuple[Block, ...]
    uav_virtual: tuple[int, int]
    sat_virtual: tuple[int, int]
    grid: SubcarrierGrid
    mode: str = "proposed"
    uav_groups: tuple[int, int] = (1, 1)
    sat_groups: tuple[int, int] = (1, 1)
    i_max_uav: int = 2
    i_max_sat: int = 2
    noise_sigma: float = 0.0
    power: float = 1.0
    doppler_residual_ratio: float = 0.0
    min_eig_ratio: float = 1.0

    def __post_init__(self):
        if self.mode not in ("proposed", "no_ttdu", "ideal_ttdu"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def uav_pattern(self) -> SubarrayPattern:
        return SubarrayPattern(self.uav_geom, *self.uav_virtual)

    def sat_pattern(self, l: int) -> SubarrayPattern:
        panel = self.panels[l]
        return SubarrayPattern(UpaGeometry(panel.n_h, panel.n_v), *self.sat_virtual)

    def plan(self, side: str, rough: VirtualAngles) -> CompensationPlan:
        if self.mode == "no_ttdu":
            return CompensationPlan("none", rough)
        if self.mode == "ideal_ttdu":
            return CompensationPlan("ideal_ttdu", rough)
        gh, gv = self.uav_groups if side == "uav" else self.sat_groups
        return CompensationPlan("gttdu", rough, gh, gv)

    def iterations(self, stage: int) -> int:
        # the uncompensated baseline runs conventional one-shot ESPRIT
        if self.mode == "no_ttdu":
            return 1
        return self.i_max_uav if stage == DL_STAGE else self.i_max_sat

    def with_noise(self, noise_sigma: float) -> "SystemModel":
        from dataclasses import replace
        return replace(self, noise_sigma=noise_sigma)


@dataclass
class StageResult:
    trace: IterationTrace | None
    prior: VirtualAngles
    effective_gain: float
    observation: Observation | None = field(default=None, repr=False)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.trace is None

    @property
    def final(self) -> AngleEstimate:
        """Final estimate; a failed stage falls back to the prior, flagged."""
        if self.trace is not None:
            return self.trace.final
        est = _estimate_from_virtual(self.prior.mu, self.prior.nu, 0)
        return AngleEstimate(est.theta_deg, est.phi_deg, est.mu, est.nu, 0, True)


def link_rng(seed, stage: int, l: int) -> np.random.Generator:
    """Generator for one (stage, link); independent of how many links exist."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (stage, l)))


def _run(obs: Observation, prior: VirtualAngles, i_max: int, model: SystemModel, keep: bool) -> StageResult:
    snaps = derotate_pilots(obs.raw, obs.pilots)
    gain = float(np.sqrt(np.mean(np.abs(obs.noiseless) ** 2)))
    try:
        trace = iterate_angles(snaps, prior, i_max, model.grid, obs.subcarriers, model.min_eig_ratio)
    except EstimationError as exc:
        log.debug("estimation failed: %s", exc)
        return StageResult(None, prior, gain, obs if keep else None, str(exc))
    return StageResult(trace, prior, gain, obs if keep else None)


def estimate_uav_stage(links: Sequence[LinkState], model: SystemModel, subcarrier_sets: Sequence,
                       seed, keep_observations: bool = False,
                       link_ids: Sequence[int] | None = None) -> list[StageResult]:
    """DL stage: every UAV estimates its own angles from the satellite's pilots.

    ``link_ids`` picks the satellite panel and seed stream of each link
    (defaults to ``0..L-1``), so a UAV can be run alone with identical results.
    """
    link_ids = list(range(len(links))) if link_ids is None else list(link_ids)
    panels = [model.panels[l] for l in link_ids]
    precoders = build_sat_precoders([lk.sat_prior for lk in links], model.sat_geom, panels)
    vgeom = UpaGeometry(*model.uav_virtual)
    out = []
    for lk, l, p, ks in zip(links, link_ids, precoders, subcarrier_sets):
        rng = link_rng(seed, DL_STAGE, l)
        ks = np.asarray(ks)
        pilots = qpsk_pilots(len(ks), rng)
        combiners = build_uav_combiners(lk.uav_prior, model.uav_pattern)
        obs = synthesize_dl_observation(
            lk, model.uav_geom, model.sat_geom, model.grid, ks, combiners, p, vgeom, pilots,
            model.noise_sigma, rng, model.plan("uav", lk.uav_prior), model.plan("sat", lk.sat_prior),
            model.power, model.doppler_residual_ratio * lk.doppler,
        )
        out.append(_run(obs, lk.uav_prior, model.iterations(DL_STAGE), model, keep_observations))
    return out


def estimate_sat_stage(links: Sequence[LinkState], refined_uav: Sequence[VirtualAngles], model: SystemModel,
                       subcarrier_sets: Sequence, seed, keep_observations: bool = False,
                       link_ids: Sequence[int] | None = None) -> list[StageResult]:
    """UL stage: refined UAV angles steer the UAV precoder and its delay lines."""
    link_ids = list(range(len(links))) if link_ids is None else list(link_ids)
    vgeom = UpaGeometry(*model.sat_virtual)
    out = []
    for lk, l, refined, ks in zip(links, link_ids, refined_uav, subcarrier_sets):
        rng = link_rng(seed, UL_STAGE, l)
        ks = np.asarray(ks)
        pilots = qpsk_pilots(len(ks), rng)
        panel = model.panels[l]
        combiners = build_sat_combiners(lk.sat_prior, model.sat_pattern(l), panel, model.sat_geom)
        precoder = build_uav_ul_precoder(refined, model.uav_geom)
        obs = synthesize_ul_observation(
            lk, model.uav_geom, model.sat_geom, model.grid, ks, combiners, precoder, vgeom, pilots,
            model.noise_sigma, rng, model.plan("uav", refined), model.plan("sat", lk.sat_prior),
            model.power, model.doppler_residual_ratio * lk.doppler,
        )
        out.append(_run(obs, lk.sat_prior, model.iterations(UL_STAGE), model, keep_observations))
    return out

"""Squint-affected LoS channel in factored (rank-1) form and pilot observations.

The per-subcarrier channel ``H[k] = c_k * u_k s_k^H`` is never built densely:
every side vector is a Kronecker product of two 1-D responses, so a
beamformed scalar costs O(n_h + n_v).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .esprit import SnapshotMatrix
from .geometry import KronVector, SubcarrierGrid, UpaGeometry, VirtualAngles
from .rf_frontend import CompensationPlan, compensation_1d


@dataclass(frozen=True)
class LinkState:
    alpha: complex
    doppler: float
    delay: float
    uav_angles: VirtualAngles
    sat_angles: VirtualAngles
    uav_prior: VirtualAngles
    sat_prior: VirtualAngles
    gain: float = 1.0


@dataclass(frozen=True)
class FactoredChannel:
    """``H = coeff * u_side s_side^H`` with Kronecker-structured side vectors."""

    coeff: complex
    u_side: KronVector
    s_side: KronVector

    def dense(self) -> np.ndarray:
        return self.coeff * np.outer(self.u_side.dense(), self.s_side.dense().conj())


def side_response_1d(angle: float, n: int, xis: np.ndarray) -> np.ndarray:
    """Uncompensated 1-D response ``exp(j (p-1) angle (1 + xi))``, shape ``(len(xis), n)``."""
    return np.exp(1j * angle * np.outer(1.0 + np.asarray(xis, dtype=float), np.arange(n)))


def _side_1d(angles: VirtualAngles, geom: UpaGeometry, plan: CompensationPlan, xis):
    ch, cv = compensation_1d(plan, geom, xis)
    return side_response_1d(angles.mu, geom.n_h, xis) * ch, side_response_1d(angles.nu, geom.n_v, xis) * cv


def scalar_coefficient(link: LinkState, k, m: int, grid: SubcarrierGrid,
                       doppler_residual: float | None = 0.0) -> np.ndarray | complex:
    """Delay/Doppler/gain factor of subcarrier(s) ``k`` in symbol ``m`` (1-based).

    ``doppler_residual=None`` keeps the full Doppler phase; a number is the
    residual left after receiver-side Doppler compensation.
    """
    k = np.asarray(k)
    psi = link.doppler if doppler_residual is None else doppler_residual
    frac = (k - 1) / grid.K - 0.5
    c = (np.sqrt(link.gain) * link.alpha
         * np.exp(2j * np.pi * psi * (m - 1) * grid.symbol_duration)
         * np.exp(-2j * np.pi * frac * grid.f_s * link.delay))
    return complex(c) if c.ndim == 0 else c


def _check_dims(*pairs):
    for got, want in pairs:
        if got != want:
            raise ValueError(f"geometry mismatch: vector of length {got} for a {want}-element array")


def dl_channel_factors(link: LinkState, k: int, m: int, grid: SubcarrierGrid,
                       uav_geom: UpaGeometry, sat_geom: UpaGeometry,
                       uav_comp: CompensationPlan | None = None,
                       sat_comp: CompensationPlan | None = None,
                       doppler_residual: float | None = 0.0) -> FactoredChannel:
    """DL channel of subcarrier ``k`` in symbol ``m``: UAV receives, satellite transmits."""
    none = CompensationPlan("none")
    xi = grid.xi(k)
    uh, uv = _side_1d(link.uav_angles, uav_geom, uav_comp or none, [xi])
    sh, sv = _side_1d(link.sat_angles, sat_geom, sat_comp or none, [xi])
    return FactoredChannel(
        scalar_coefficient(link, k, m, grid, doppler_residual),
        KronVector(uh[0], uv[0]),
        KronVector(sh[0], sv[0]),
    )


def ul_channel_factors(link: LinkState, k: int, n: int, grid: SubcarrierGrid,
                       uav_geom: UpaGeometry, sat_geom: UpaGeometry,
                       uav_comp: CompensationPlan | None = None,
                       sat_comp: CompensationPlan | None = None,
                       doppler_residual: float | None = 0.0) -> FactoredChannel:
    """UL mirror of :func:`dl_channel_factors`: satellite receives, UAV transmits."""
    dl = dl_channel_factors(link, k, n, grid, uav_geom, sat_geom, uav_comp, sat_comp, doppler_residual)
    return FactoredChannel(dl.coeff, dl.s_side, dl.u_side)


def apply_beamformers(q, p, h: FactoredChannel) -> complex:
    """``q^H H p`` without forming ``H``."""
    if isinstance(q, KronVector) and isinstance(p, KronVector):
        _check_dims((len(q.h), len(h.u_side.h)), (len(q.v), len(h.u_side.v)),
                    (len(p.h), len(h.s_side.h)), (len(p.v), len(h.s_side.v)))
        return h.coeff * q.vdot(h.u_side) * h.s_side.vdot(p)
    q = np.asarray(q)
    p = np.asarray(p)
    u = h.u_side.dense()
    s = h.s_side.dense()
    _check_dims((len(q), len(u)), (len(p), len(s)))
    return complex(h.coeff * np.vdot(q, u) * np.vdot(s, p))


def qpsk_pilots(n: int, rng: np.random.Generator) -> np.ndarray:
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, size=n)))


@dataclass
class Observation:
    """Received pilot block plus the pieces needed to interpret it."""

    raw: SnapshotMatrix
    pilots: np.ndarray
    subcarriers: np.ndarray
    noiseless: np.ndarray = field(repr=False)


def _synthesize(link: LinkState, rx_angles: VirtualAngles, rx_geom: UpaGeometry, rx_comp: CompensationPlan,
                tx_angles: VirtualAngles, tx_geom: UpaGeometry, tx_comp: CompensationPlan,
                combiners: Sequence[KronVector], precoder: KronVector, virtual_geom: UpaGeometry,
                grid: SubcarrierGrid, subcarriers, pilots, noise_sigma: float, rng,
                power: float, doppler_residual: float | None) -> Observation:
    subcarriers = np.asarray(subcarriers)
    if len(combiners) != virtual_geom.total:
        raise ValueError(f"{len(combiners)} combiners for {virtual_geom.total} virtual elements")
    pilots = np.asarray(pilots)
    if pilots.shape != subcarriers.shape:
        raise ValueError("one pilot per allocated subcarrier required")
    xis = grid.xi(subcarriers)
    xis = np.atleast_1d(xis)
    rh, rv = _side_1d(rx_angles, rx_geom, rx_comp, xis)
    th, tv = _side_1d(tx_angles, tx_geom, tx_comp, xis)
    _check_dims((len(precoder.h), tx_geom.n_h), (len(precoder.v), tx_geom.n_v))

    qh = np.stack([q.h for q in combiners])
    qv = np.stack([q.v for q in combiners])
    _check_dims((qh.shape[1], rx_geom.n_h), (qv.shape[1], rx_geom.n_v))
    rx_gain = (qh.conj() @ rh.T) * (qv.conj() @ rv.T)                   # (I, K_l)
    tx_gain = (th.conj() @ precoder.h) * (tv.conj() @ precoder.v)       # (K_l,)

    symbols = np.arange(1, virtual_geom.total + 1)
    coeff = np.stack([scalar_coefficient(link, subcarriers, m, grid, doppler_residual) for m in symbols])
    clean = np.sqrt(power) * coeff * rx_gain * tx_gain[None, :] * pilots[None, :]

    shape = clean.shape
    noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * (noise_sigma / np.sqrt(2))
    return Observation(SnapshotMatrix(clean + noise, virtual_geom), pilots, subcarriers, clean)


def synthesize_dl_observation(link: LinkState, uav_geom: UpaGeometry, sat_geom: UpaGeometry,
                              grid: SubcarrierGrid, subcarriers, combiners: Sequence[KronVector],
                              precoder: KronVector, virtual_geom: UpaGeometry, pilots,
                              noise_sigma: float, rng, uav_comp: CompensationPlan | None = None,
                              sat_comp: CompensationPlan | None = None, power: float = 1.0,
                              doppler_residual: float | None = 0.0) -> Observation:
    """Pilot block received at the UAV over ``I_U`` symbols (one pattern each).

    ``rng`` is a :class:`numpy.random.Generator` or anything accepted by
    :func:`numpy.random.default_rng`.
    """
    none = CompensationPlan("none")
    return _synthesize(link, link.uav_angles, uav_geom, uav_comp or none,
                       link.sat_angles, sat_geom, sat_comp or none,
                       combiners, precoder, virtual_geom, grid, subcarriers, pilots,
                       noise_sigma, np.random.default_rng(rng), power, doppler_residual)


def synthesize_ul_observation(link: LinkState, uav_geom: UpaGeometry, sat_geom: UpaGeometry,
                              grid: SubcarrierGrid, subcarriers, combiners: Sequence[KronVector],
                              precoder: KronVector, virtual_geom: UpaGeometry, pilots,
                              noise_sigma: float, rng, uav_comp: CompensationPlan | None = None,
                              sat_comp: CompensationPlan | None = None, power: float = 1.0,
                              doppler_residual: float | None = 0.0) -> Observation:
    """Pilot block received at the satellite over ``I_S`` symbols."""
    none = CompensationPlan("none")
    return _synthesize(link, link.sat_angles, sat_geom, sat_comp or none,
                       link.uav_angles, uav_geom, uav_comp or none,
                       combiners, precoder, virtual_geom, grid, subcarriers, pilots,
                       noise_sigma, np.random.default_rng(rng), power, doppler_residual)

"""Random space-to-air scenarios: UAV positions, true angles, gains and priors.

Both arrays lie in horizontal planes with boresight along the vertical axis;
the satellite array faces down, each UAV array faces up and is yawed by a
random heading.
"""
from __future__ import annotations

import numpy as np

from ..channel import LinkState
from ..geometry import physical_to_virtual
from .config import SimConfig

MAX_REDRAWS = 1000


def allocate_subcarriers(K: int, L: int, l: int) -> np.ndarray:
    """Comb of subcarriers (1-based) for UAV ``l`` in ``1..L``."""
    if L < 1 or K % L:
        raise ValueError(f"K={K} subcarriers cannot be split evenly among L={L} UAVs")
    if not 1 <= l <= L:
        raise ValueError(f"UAV index {l} outside 1..{L}")
    return np.arange(l, K + 1, L)


def direction_angles(x: float, y: float) -> tuple[float, float]:
    """(theta, phi) in degrees of a unit direction with in-plane components ``x``, ``y``."""
    phi = np.arcsin(np.clip(y, -1.0, 1.0))
    c = np.cos(phi)
    theta = np.arcsin(np.clip(x / c, -1.0, 1.0)) if c > 0 else 0.0
    return float(np.rad2deg(theta)), float(np.rad2deg(phi))


def link_angles(x: float, y: float, heading: float, altitude: float):
    """True (sat_theta, sat_phi, uav_theta, uav_phi) for a UAV at horizontal offset (x, y)."""
    rho = np.sqrt(x * x + y * y + altitude * altitude)
    dx, dy = x / rho, y / rho
    sat = direction_angles(dx, dy)
    # UAV sees the satellite along (-dx, -dy, +z), expressed in its yawed frame
    c, s = np.cos(heading), np.sin(heading)
    ux = c * (-dx) + s * (-dy)
    uy = -s * (-dx) + c * (-dy)
    uav = direction_angles(ux, uy)
    return sat + uav


def _prior(theta: float, phi: float, bound: float, rng: np.random.Generator):
    off = rng.uniform(-bound, bound, size=2)
    return (float(np.clip(theta + off[0], -89.0, 89.0)), float(np.clip(phi + off[1], -89.0, 89.0)))


def draw_scenario(config: SimConfig, trial_seed) -> list[LinkState]:
    """Links for one trial; deterministic in ``trial_seed``."""
    rng = np.random.default_rng(trial_seed)
    links = []
    for _ in range(config.n_uav):
        for _ in range(MAX_REDRAWS):
            r = config.radius_m * np.sqrt(rng.uniform())
            az = rng.uniform(0, 2 * np.pi)
            heading = rng.uniform(0, 2 * np.pi)
            angles = link_angles(r * np.cos(az), r * np.sin(az), heading, config.altitude_m)
            if max(abs(a) for a in angles) <= config.angle_max_deg:
                break
        else:
            raise RuntimeError("could not draw a UAV position inside the angle range")
        sat_t, sat_p, uav_t, uav_p = angles
        alpha = np.sqrt(config.alpha_variance / 2) * complex(*rng.standard_normal(2))
        delay = rng.uniform(0, config.delay_max)
        uav_prior = _prior(uav_t, uav_p, config.prior_offset_deg, rng)
        sat_prior = _prior(sat_t, sat_p, config.prior_offset_deg, rng)
        links.append(LinkState(
            alpha=alpha,
            doppler=config.radial_velocity / config.wavelength,
            delay=delay,
            uav_angles=physical_to_virtual(uav_t, uav_p),
            sat_angles=physical_to_virtual(sat_t, sat_p),
            uav_prior=physical_to_virtual(*uav_prior),
            sat_prior=physical_to_virtual(*sat_prior),
        ))
    return links

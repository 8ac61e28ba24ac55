"""Conditional (deterministic-gain, known-pilot) Cramer-Rao bound for one source
observed by a small virtual UPA."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import VirtualAngles, virtual_to_physical


class UnidentifiableError(ValueError):
    """The Fisher information matrix is singular."""


@dataclass(frozen=True)
class CrlbResult:
    var_mu: float
    var_nu: float
    var_theta_deg2: float
    var_phi_deg2: float
    fim: np.ndarray


def fisher_information(v: VirtualAngles, gamma: complex, sigma_n2: float, i_h: int, i_v: int,
                       pilots) -> np.ndarray:
    """4x4 FIM for ``(mu, nu, Re gamma, Im gamma)`` under ``y_k = gamma a s_k + n_k``."""
    p = np.tile(np.arange(i_h), i_v)
    q = np.repeat(np.arange(i_v), i_h)
    a = np.exp(1j * (v.mu * p + v.nu * q))
    base = np.stack([1j * gamma * p * a, 1j * gamma * q * a, a, 1j * a], axis=1)   # (I, 4)
    pilots = np.asarray(pilots)
    energy = float(np.sum(np.abs(pilots) ** 2))
    return (2.0 / sigma_n2) * energy * (base.conj().T @ base).real


def angle_jacobian(v: VirtualAngles) -> np.ndarray:
    """d(theta, phi)/d(mu, nu) in rad/rad."""
    r2 = np.pi ** 2 - v.nu ** 2
    theta, _ = virtual_to_physical(v)
    c_theta = np.cos(np.deg2rad(theta))
    return np.array([
        [1.0 / (c_theta * np.sqrt(r2)), v.mu * v.nu / (c_theta * r2 ** 1.5)],
        [0.0, 1.0 / np.sqrt(r2)],
    ])


def crlb_single_source(v: VirtualAngles, gamma: complex, sigma_n2: float, i_h: int, i_v: int,
                       K_l: int | None = None, pilots=None) -> CrlbResult:
    """Bound on the (mu, nu) and (theta, phi) variances.

    Either ``K_l`` (unit-modulus pilots) or an explicit pilot vector is given.
    Directions within 0.5 degree of |phi| = 90 are rejected.
    """
    if sigma_n2 <= 0:
        raise ValueError("noise variance must be positive")
    if pilots is None:
        if K_l is None or K_l < 1:
            raise ValueError("need K_l >= 1 or explicit pilots")
        pilots = np.ones(K_l)
    theta, phi = virtual_to_physical(v)
    if abs(phi) > 89.5:
        raise ValueError(f"elevation {phi:.3f} deg too close to 90 deg for a degree-domain bound")
    if abs(theta) > 89.5:
        raise ValueError(f"azimuth {theta:.3f} deg too close to 90 deg for a degree-domain bound")

    fim = fisher_information(v, gamma, sigma_n2, i_h, i_v, pilots)
    w = np.linalg.eigvalsh(fim)
    if w[-1] <= 0 or w[0] <= 1e-10 * w[-1]:
        raise UnidentifiableError(f"unidentifiable configuration ({i_h}x{i_v} virtual array)")
    cov = np.linalg.inv(fim)[:2, :2]
    jac = angle_jacobian(v)
    cov_deg = np.rad2deg(1.0) ** 2 * (jac @ cov @ jac.T)
    return CrlbResult(float(cov[0, 0]), float(cov[1, 1]), float(cov_deg[0, 0]), float(cov_deg[1, 1]), fim)

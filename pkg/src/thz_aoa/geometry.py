"""Uniform planar array geometry, virtual angles and (squint) steering vectors.

Index convention: element (p, q) of an ``n_h x n_v`` array, 1-based, sits at
linear position ``(q - 1) * n_h + p``. Every 2-D response is therefore
``kron(vertical, horizontal)``.

Steering vectors are left unnormalised; the 1/sqrt(M) scale factors live in
the beamformer builders.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonPhysicalAngleError(ValueError):
    """Raised when a (mu, nu) pair does not map to a physical direction."""


@dataclass(frozen=True)
class UpaGeometry:
    n_h: int
    n_v: int

    def __post_init__(self):
        if int(self.n_h) != self.n_h or int(self.n_v) != self.n_v:
            raise ValueError("array dimensions must be integers")
        if self.n_h < 1 or self.n_v < 1:
            raise ValueError(f"array dimensions must be >= 1, got {self.n_h}x{self.n_v}")

    @property
    def total(self) -> int:
        return self.n_h * self.n_v

    def index(self, p: int, q: int) -> int:
        """1-based linear index of element (p, q)."""
        if not (1 <= p <= self.n_h and 1 <= q <= self.n_v):
            raise IndexError(f"element ({p}, {q}) outside {self.n_h}x{self.n_v} array")
        return (q - 1) * self.n_h + p


@dataclass(frozen=True)
class VirtualAngles:
    """Phase slopes ``mu = pi sin(theta) cos(phi)`` and ``nu = pi sin(phi)``."""

    mu: float
    nu: float

    def __post_init__(self):
        if not (abs(self.mu) <= np.pi and abs(self.nu) <= np.pi):
            raise ValueError(f"virtual angles must lie in [-pi, pi], got ({self.mu}, {self.nu})")

    def __neg__(self) -> "VirtualAngles":
        return VirtualAngles(-self.mu, -self.nu)


@dataclass(frozen=True)
class SubcarrierGrid:
    K: int
    f_z: float
    f_s: float
    n_cp: int = 0
    t_sym: float | None = None

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.f_z <= 0 or self.f_s <= 0:
            raise ValueError("frequencies must be positive")

    @property
    def symbol_duration(self) -> float:
        """OFDM symbol length; ``(K + N_cp) / f_s`` unless overridden."""
        return self.t_sym if self.t_sym is not None else (self.K + self.n_cp) / self.f_s

    def xi(self, k) -> np.ndarray | float:
        """Fractional frequency offset of subcarrier(s) ``k`` (1-based)."""
        k_arr = np.asarray(k)
        if np.any(k_arr < 1) or np.any(k_arr > self.K):
            raise IndexError(f"subcarrier index out of range 1..{self.K}")
        out = ((k_arr - 1) / self.K - 0.5) * self.f_s / self.f_z
        return float(out) if out.ndim == 0 else out


def xi_of(k: int, grid: SubcarrierGrid) -> float:
    return grid.xi(k)


def physical_to_virtual(theta: float, phi: float) -> VirtualAngles:
    """Map azimuth/elevation in degrees to virtual angles (radians)."""
    if not (-90.0 <= theta <= 90.0 and -90.0 <= phi <= 90.0):
        raise ValueError(f"angles must lie in [-90, 90] degrees, got ({theta}, {phi})")
    th, ph = np.deg2rad(theta), np.deg2rad(phi)
    return VirtualAngles(float(np.pi * np.sin(th) * np.cos(ph)), float(np.pi * np.sin(ph)))


def virtual_to_physical(v: VirtualAngles) -> tuple[float, float]:
    """Inverse of :func:`physical_to_virtual`, returning ``(theta, phi)`` in degrees.

    Raises
    ------
    NonPhysicalAngleError
        If ``(mu / pi)^2 + (nu / pi)^2 > 1``, i.e. no direction produces the pair.
    """
    s_phi = v.nu / np.pi
    if abs(s_phi) > 1.0:
        raise NonPhysicalAngleError(f"non-physical angle pair: |nu| > pi ({v.nu})")
    c_phi = np.sqrt(1.0 - s_phi * s_phi)
    if c_phi == 0.0:
        if v.mu != 0.0:
            raise NonPhysicalAngleError("non-physical angle pair: mu != 0 at |phi| = 90 deg")
        return 0.0, float(np.rad2deg(np.arcsin(s_phi)))
    s_theta = v.mu / (np.pi * c_phi)
    if abs(s_theta) > 1.0 + 1e-12:
        raise NonPhysicalAngleError(f"non-physical angle pair ({v.mu}, {v.nu})")
    s_theta = min(1.0, max(-1.0, s_theta))
    return float(np.rad2deg(np.arcsin(s_theta))), float(np.rad2deg(np.arcsin(s_phi)))


def clamp_to_physical(mu: float, nu: float, margin: float = 1e-9) -> tuple[float, float, bool]:
    """Radially project ``(mu, nu)`` onto the physical disc of radius pi.

    Returns the (possibly) projected pair and whether a projection happened.
    """
    r = np.hypot(mu, nu)
    limit = np.pi * (1.0 - margin)
    if r <= np.pi:
        return float(mu), float(nu), False
    scale = limit / r
    return float(mu * scale), float(nu * scale), True


def steering_1d(angle: float, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.exp(1j * angle * np.arange(n))


def squint_1d(angle: float, n: int, xi: float) -> np.ndarray:
    """Frequency-dependent residual ``exp(j (p-1) angle xi)``."""
    return steering_1d(angle * xi, n)


@dataclass(frozen=True)
class KronVector:
    """A vector stored as ``kron(v, h)`` without materialising it.

    Every steering vector, TTDU compensation vector and rectangular-support
    beamformer in this package has this structure, so inner products and
    Hadamard products cost O(n_h + n_v) instead of O(n_h * n_v).
    """

    h: np.ndarray
    v: np.ndarray

    def __len__(self) -> int:
        return len(self.h) * len(self.v)

    def dense(self) -> np.ndarray:
        return np.kron(self.v, self.h)

    def __array__(self, dtype=None, copy=None):
        out = self.dense()
        return out if dtype is None else out.astype(dtype)

    def __mul__(self, other: "KronVector") -> "KronVector":
        if isinstance(other, KronVector):
            return KronVector(self.h * other.h, self.v * other.v)
        return KronVector(self.h * other, self.v)

    __rmul__ = __mul__

    def conj(self) -> "KronVector":
        return KronVector(np.conj(self.h), np.conj(self.v))

    def vdot(self, other: "KronVector") -> complex:
        """``self^H other`` computed factor by factor."""
        return complex(np.vdot(self.h, other.h) * np.vdot(self.v, other.v))

    def norm(self) -> float:
        return float(np.linalg.norm(self.h) * np.linalg.norm(self.v))


def steering_upa_kron(v: VirtualAngles, g: UpaGeometry) -> KronVector:
    return KronVector(steering_1d(v.mu, g.n_h), steering_1d(v.nu, g.n_v))


def steering_upa(v: VirtualAngles, g: UpaGeometry) -> np.ndarray:
    return steering_upa_kron(v, g).dense()


def squint_upa_kron(v: VirtualAngles, g: UpaGeometry, xi: float) -> KronVector:
    return KronVector(squint_1d(v.mu, g.n_h, xi), squint_1d(v.nu, g.n_v, xi))


def squint_upa(v: VirtualAngles, g: UpaGeometry, xi: float) -> np.ndarray:
    return squint_upa_kron(v, g, xi).dense()

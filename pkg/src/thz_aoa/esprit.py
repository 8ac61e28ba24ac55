"""Two-dimensional unitary ESPRIT for a single source on a small virtual UPA."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import UpaGeometry, VirtualAngles, steering_1d


class EspritError(RuntimeError):
    pass


class RankDeficientError(EspritError):
    """Dominant eigenvalue not separated from the rest of the spectrum."""


class InvarianceSolveError(EspritError):
    """Degenerate selection system in the invariance equations."""


@dataclass(frozen=True)
class SnapshotMatrix:
    """Observations of an ``i_h x i_v`` virtual array; one column per subcarrier."""

    data: np.ndarray
    virtual_geom: UpaGeometry

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] != self.virtual_geom.total:
            raise ValueError(
                f"snapshot matrix needs {self.virtual_geom.total} rows, got shape {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("snapshot matrix contains non-finite entries")

    @property
    def n_snapshots(self) -> int:
        return self.data.shape[1]


def virtual_steering(v: VirtualAngles, i_h: int, i_v: int) -> np.ndarray:
    return np.kron(steering_1d(v.nu, i_v), steering_1d(v.mu, i_h))


def derotate_pilots(y, pilots, virtual_geom: UpaGeometry | None = None) -> SnapshotMatrix:
    """Strip known unit-modulus pilots: column k is multiplied by ``conj(s[k])``."""
    if isinstance(y, SnapshotMatrix):
        virtual_geom = virtual_geom or y.virtual_geom
        y = y.data
    if virtual_geom is None:
        raise ValueError("virtual geometry required for a raw matrix")
    pilots = np.asarray(pilots)
    if pilots.shape != (y.shape[1],):
        raise ValueError(f"need {y.shape[1]} pilots, got {pilots.shape}")
    if np.any(np.abs(pilots) == 0):
        raise ValueError("zero-modulus pilot cannot be de-rotated")
    return SnapshotMatrix(y * np.conj(pilots)[None, :], virtual_geom)


def _q_matrix(n: int) -> np.ndarray:
    """Left-Pi-real unitary matrix of order ``n``."""
    k = n // 2
    eye = np.eye(k)
    pi = np.fliplr(eye)
    if n % 2 == 0:
        top = np.hstack([eye, 1j * eye])
        bot = np.hstack([pi, -1j * pi])
        return np.vstack([top, bot]) / np.sqrt(2)
    z = np.zeros((k, 1))
    top = np.hstack([eye, z, 1j * eye])
    mid = np.hstack([z.T, [[np.sqrt(2)]], z.T])
    bot = np.hstack([pi, z, -1j * pi])
    return np.vstack([top, mid, bot]) / np.sqrt(2)


@lru_cache(maxsize=32)
def _esprit_operators(i_h: int, i_v: int):
    """Real-valued transform and invariance matrices (K1, K2) per direction."""
    q_full = np.kron(_q_matrix(i_v), _q_matrix(i_h))

    def select(n: int):
        j2 = np.eye(n)[1:, :]
        return j2

    def kpair(j2: np.ndarray, q_sel: np.ndarray):
        t = q_sel.conj().T @ j2 @ q_full
        return 2 * t.real, 2 * t.imag

    j2_mu = np.kron(np.eye(i_v), select(i_h))
    j2_nu = np.kron(select(i_v), np.eye(i_h))
    k_mu = kpair(j2_mu, np.kron(_q_matrix(i_v), _q_matrix(i_h - 1)))
    k_nu = kpair(j2_nu, np.kron(_q_matrix(i_v - 1), _q_matrix(i_h)))
    return q_full, k_mu, k_nu


def _solve_invariance(k1: np.ndarray, k2: np.ndarray, e: np.ndarray) -> float:
    lhs = k1 @ e
    rhs = k2 @ e
    denom = float(lhs @ lhs)
    if not np.isfinite(denom) or denom <= 1e-14 * max(float(rhs @ rhs), 1e-300):
        raise InvarianceSolveError("invariance solve failed: degenerate selection system")
    return float(2.0 * np.arctan(float(lhs @ rhs) / denom))


def tdu_esprit(s: SnapshotMatrix, min_eig_ratio: float = 1.0) -> tuple[float, float, complex]:
    """Estimate ``(mu, nu)`` of one source and its least-squares amplitude.

    Forward-backward averaged covariance is mapped to a real symmetric matrix
    with left-Pi-real unitary transforms; the dominant real eigenvector then
    solves two real least-squares invariance equations for ``tan(mu/2)`` and
    ``tan(nu/2)``.

    Parameters
    ----------
    s : SnapshotMatrix
        De-rotated snapshots, rows in virtual-geometry index order.
    min_eig_ratio : float
        The largest eigenvalue must exceed this multiple of the second one.

    Returns
    -------
    mu_hat, nu_hat : float
        Virtual angles in ``(-pi, pi)``.
    gamma_hat : complex
        Amplitude fit of the data to ``gamma * a(mu_hat, nu_hat) 1^T``.
    """
    g = s.virtual_geom
    if g.n_h < 2 or g.n_v < 2:
        raise ValueError("TDU-ESPRIT needs at least a 2x2 virtual array")
    x = np.asarray(s.data, dtype=complex)
    n_snap = x.shape[1]
    if n_snap < 1:
        raise ValueError("need at least one snapshot")

    q_full, (k1_mu, k2_mu), (k1_nu, k2_nu) = _esprit_operators(g.n_h, g.n_v)
    r = x @ x.conj().T / n_snap
    r_fb = 0.5 * (r + np.flip(r.conj()))
    r_real = (q_full.conj().T @ r_fb @ q_full).real
    r_real = 0.5 * (r_real + r_real.T)
    w, vecs = np.linalg.eigh(r_real)
    top, second = w[-1], (w[-2] if len(w) > 1 else 0.0)
    if not top > 0 or top <= min_eig_ratio * second:
        raise RankDeficientError(
            f"rank-deficient subspace: eigenvalues {top:.3e} vs {second:.3e}"
        )
    e = vecs[:, -1]
    mu = _solve_invariance(k1_mu, k2_mu, e)
    nu = _solve_invariance(k1_nu, k2_nu, e)

    a = virtual_steering(VirtualAngles(mu, nu), g.n_h, g.n_v)
    gamma = complex(a.conj() @ x.sum(axis=1) / (g.total * n_snap))
    return mu, nu, gamma

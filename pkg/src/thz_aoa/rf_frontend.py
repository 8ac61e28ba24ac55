"""RF front end: grouped true-time-delay compensation, subarray selection
patterns of the antenna switching network, and analog beamformer builders.

All builders return :class:`~thz_aoa.geometry.KronVector` objects; supports
are rectangular blocks so the Kronecker structure survives. ``np.asarray``
on the result gives the dense length-N vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import KronVector, UpaGeometry, VirtualAngles, steering_1d

MODES = ("none", "ideal_ttdu", "gttdu")


@dataclass(frozen=True)
class CompensationPlan:
    mode: str
    rough: VirtualAngles = VirtualAngles(0.0, 0.0)
    group_h: int = 1
    group_v: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown compensation mode {self.mode!r}; expected one of {MODES}")
        if self.group_h < 1 or self.group_v < 1:
            raise ValueError("TTDU group sizes must be >= 1")

    def with_rough(self, rough: VirtualAngles) -> "CompensationPlan":
        return CompensationPlan(self.mode, rough, self.group_h, self.group_v)

    def groups(self) -> tuple[int, int]:
        if self.mode == "ideal_ttdu":
            return 1, 1
        return self.group_h, self.group_v


def group_centers(n: int, group: int) -> np.ndarray:
    """1-based reference coordinate of each antenna's TTDU group (its centre)."""
    if group > n:
        raise ValueError(f"TTDU group of {group} exceeds array dimension {n}")
    if n % group:
        raise ValueError(f"TTDU group of {group} does not tile an array dimension of {n}")
    block = np.arange(n) // group
    return block * group + (group + 1) / 2.0


def gttdu_phases_1d(angle: float, n: int, group: int, xis) -> np.ndarray:
    """Per-dimension compensation phasors, shape ``(len(xis), n)``.

    Each antenna receives ``exp(-j (c - 1) angle xi)`` with ``c`` its group
    centre; ``group == 1`` is the per-antenna (ideal) delay line.
    """
    xis = np.atleast_1d(np.asarray(xis, dtype=float))
    c = group_centers(n, group)
    return np.exp(-1j * angle * np.outer(xis, c - 1.0))


def gttdu_kron(plan: CompensationPlan, geom: UpaGeometry, xi: float) -> KronVector:
    if plan.mode == "none":
        return KronVector(np.ones(geom.n_h, complex), np.ones(geom.n_v, complex))
    gh, gv = plan.groups()
    return KronVector(
        gttdu_phases_1d(plan.rough.mu, geom.n_h, gh, xi)[0],
        gttdu_phases_1d(plan.rough.nu, geom.n_v, gv, xi)[0],
    )


def gttdu_vector(plan: CompensationPlan, geom: UpaGeometry, xi: float) -> np.ndarray:
    return gttdu_kron(plan, geom, xi).dense()


def compensation_1d(plan: CompensationPlan, geom: UpaGeometry, xis) -> tuple[np.ndarray, np.ndarray]:
    """Batched per-dimension compensation: ``(len(xis), n_h)`` and ``(len(xis), n_v)``."""
    xis = np.atleast_1d(np.asarray(xis, dtype=float))
    if plan.mode == "none":
        return np.ones((len(xis), geom.n_h), complex), np.ones((len(xis), geom.n_v), complex)
    gh, gv = plan.groups()
    return (
        gttdu_phases_1d(plan.rough.mu, geom.n_h, gh, xis),
        gttdu_phases_1d(plan.rough.nu, geom.n_v, gv, xis),
    )


@dataclass(frozen=True)
class Block:
    """Rectangular antenna block: 0-based origin ``(h0, v0)`` and size ``n_h x n_v``."""

    h0: int
    v0: int
    n_h: int
    n_v: int

    @property
    def size(self) -> int:
        return self.n_h * self.n_v

    def fits(self, parent: UpaGeometry) -> bool:
        return (self.h0 >= 0 and self.v0 >= 0
                and self.h0 + self.n_h <= parent.n_h and self.v0 + self.n_v <= parent.n_v)

    def indices(self, parent: UpaGeometry) -> np.ndarray:
        """1-based linear indices of the block, in geometry order."""
        if not self.fits(parent):
            raise ValueError(f"{self} does not fit in {parent}")
        p = np.arange(self.h0, self.h0 + self.n_h) + 1
        q = np.arange(self.v0, self.v0 + self.n_v) + 1
        return ((q[:, None] - 1) * parent.n_h + p[None, :]).ravel()

    def masks(self, parent: UpaGeometry) -> tuple[np.ndarray, np.ndarray]:
        mh = np.zeros(parent.n_h, bool)
        mv = np.zeros(parent.n_v, bool)
        mh[self.h0:self.h0 + self.n_h] = True
        mv[self.v0:self.v0 + self.n_v] = True
        return mh, mv

    def overlaps(self, other: "Block") -> bool:
        return (self.h0 < other.h0 + other.n_h and other.h0 < self.h0 + self.n_h
                and self.v0 < other.v0 + other.n_v and other.v0 < self.v0 + self.n_v)


@dataclass(frozen=True)
class SubarrayPattern:
    """Shifted-subarray schedule forming an ``i_h x i_v`` virtual array."""

    parent: UpaGeometry
    i_h: int
    i_v: int

    def __post_init__(self):
        if not (1 <= self.i_h <= self.parent.n_h and 1 <= self.i_v <= self.parent.n_v):
            raise ValueError(
                f"virtual array {self.i_h}x{self.i_v} does not fit in "
                f"{self.parent.n_h}x{self.parent.n_v} parent"
            )

    @property
    def sub_h(self) -> int:
        return self.parent.n_h - self.i_h + 1

    @property
    def sub_v(self) -> int:
        return self.parent.n_v - self.i_v + 1

    @property
    def count(self) -> int:
        return self.i_h * self.i_v

    @property
    def virtual_geom(self) -> UpaGeometry:
        return UpaGeometry(self.i_h, self.i_v)

    def offset(self, m: int) -> tuple[int, int]:
        """0-based (horizontal, vertical) shift of pattern ``m`` (1-based, raster order)."""
        if not 1 <= m <= self.count:
            raise IndexError(f"pattern {m} outside 1..{self.count}")
        return (m - 1) % self.i_h, (m - 1) // self.i_h

    def block(self, m: int) -> Block:
        dh, dv = self.offset(m)
        return Block(dh, dv, self.sub_h, self.sub_v)


def subarray_index_set(pat: SubarrayPattern, m: int) -> np.ndarray:
    return pat.block(m).indices(pat.parent)


def _block_beam(rough: VirtualAngles, geom: UpaGeometry, values: Block, support: Block) -> KronVector:
    """Unit-norm beam: steering values read at ``values``, written at ``support``."""
    a_h = steering_1d(rough.mu, geom.n_h)
    a_v = steering_1d(rough.nu, geom.n_v)
    h = np.zeros(geom.n_h, complex)
    v = np.zeros(geom.n_v, complex)
    h[support.h0:support.h0 + support.n_h] = a_h[values.h0:values.h0 + values.n_h]
    v[support.v0:support.v0 + support.n_v] = a_v[values.v0:values.v0 + values.n_v]
    return KronVector(h / np.sqrt(values.n_h), v / np.sqrt(values.n_v))


def satellite_panels(panels_h: int, panels_v: int, m_h: int, m_v: int) -> list[Block]:
    """Sub-connected panels of the satellite array, one per UAV in raster order."""
    return [Block(ih * m_h, iv * m_v, m_h, m_v) for iv in range(panels_v) for ih in range(panels_h)]


def build_sat_precoder(rough: VirtualAngles, sat_geom: UpaGeometry, panel: Block) -> KronVector:
    return _block_beam(rough, sat_geom, panel, panel)


def build_sat_precoders(roughs: Sequence[VirtualAngles], sat_geom: UpaGeometry,
                        panels: Sequence[Block]) -> list[KronVector]:
    """Precoders for all UAVs; overlapping panel assignments are rejected."""
    if len(roughs) != len(panels):
        raise ValueError("one panel per UAV required")
    for i, a in enumerate(panels):
        for b in panels[i + 1:]:
            if a.overlaps(b):
                raise ValueError(f"satellite panels {a} and {b} overlap")
    return [build_sat_precoder(r, sat_geom, p) for r, p in zip(roughs, panels)]


def build_uav_combiners(rough: VirtualAngles, pat: SubarrayPattern) -> list[KronVector]:
    first = pat.block(1)
    return [_block_beam(rough, pat.parent, first, pat.block(m)) for m in range(1, pat.count + 1)]


def build_sat_combiners(rough: VirtualAngles, pat: SubarrayPattern, panel: Block,
                        sat_geom: UpaGeometry) -> list[KronVector]:
    """UL combiner schedule; ``pat.parent`` is the panel, shifts stay inside it."""
    if (pat.parent.n_h, pat.parent.n_v) != (panel.n_h, panel.n_v):
        raise ValueError("pattern parent must match the panel dimensions")

    def shifted(b: Block) -> Block:
        return Block(panel.h0 + b.h0, panel.v0 + b.v0, b.n_h, b.n_v)

    first = shifted(pat.block(1))
    return [_block_beam(rough, sat_geom, first, shifted(pat.block(m))) for m in range(1, pat.count + 1)]


def build_uav_ul_precoder(refined: VirtualAngles, uav_geom: UpaGeometry) -> KronVector:
    full = Block(0, 0, uav_geom.n_h, uav_geom.n_v)
    return _block_beam(refined, uav_geom, full, full)

"""Wideband THz angle estimation for satellite-to-UAV ultra-massive MIMO links."""
from .crlb import CrlbResult, crlb_single_source
from .esprit import SnapshotMatrix, derotate_pilots, tdu_esprit
from .estimator import AngleEstimate, SystemModel, estimate_sat_stage, estimate_uav_stage, iterate_angles
from .geometry import SubcarrierGrid, UpaGeometry, VirtualAngles, physical_to_virtual, virtual_to_physical

__all__ = [
    "AngleEstimate", "CrlbResult", "SnapshotMatrix", "SubcarrierGrid", "SystemModel", "UpaGeometry",
    "VirtualAngles", "crlb_single_source", "derotate_pilots", "estimate_sat_stage", "estimate_uav_stage",
    "iterate_angles", "physical_to_virtual", "tdu_esprit", "virtual_to_physical",
]
__version__ = "0.1.0"

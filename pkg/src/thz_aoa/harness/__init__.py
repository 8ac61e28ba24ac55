"""Monte-Carlo campaigns, scenarios, configuration and the command line."""
from .campaign import CampaignResult, RmseRow, rmse, rows_to_csv, run_campaign
from .config import PRESETS, ConfigError, SimConfig, load_config, preset
from .oracle import GridResult, crosscheck, grid_oracle
from .scenario import allocate_subcarriers, draw_scenario

__all__ = [
    "CampaignResult", "ConfigError", "GridResult", "PRESETS", "RmseRow", "SimConfig",
    "allocate_subcarriers", "crosscheck", "draw_scenario", "grid_oracle", "load_config",
    "preset", "rmse", "rows_to_csv", "run_campaign",
]

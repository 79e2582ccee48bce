"""Monte Carlo harness and command-line interface."""

from .config import RunConfig, SweepSpec, load_config
from .sweep import (TrialRecord, SweepPoint, ambiguity_demo, position_bound, run_sweep,
                    run_trial, write_csv)

__all__ = ["RunConfig", "SweepSpec", "load_config", "TrialRecord", "SweepPoint",
           "ambiguity_demo", "position_bound", "run_sweep", "run_trial", "write_csv"]

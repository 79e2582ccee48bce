"""Two-stage maximum-likelihood localization for bistatic MIMO-OFDM sensing at THz."""

from .channel import (ChannelRealization, RxGrid, link_snr, path_loss_rx, path_loss_tx,
                      realize_channel, simulate_frames, synthesize_rx)
from .core import (SPEED_OF_LIGHT, BistaticParams, ConfigurationError, DegenerateGeometryError,
                   SceneGeometry, SystemConfig, TargetState, cp_from_area, forward_geometry,
                   position_from_bistatic)
from .estimator import (EstimateResult, GMLGridEstimator, SearchGrid, TwoStageLocalizer,
                        coarse_stage, fine_stage, gml_objective, grid_search, two_stage_estimate)
from .waveform import (Beamformer, SubcarrierPlan, SymbolGrid, design_sector_beamformer,
                       generate_symbols, make_plan, steering_vector)

__version__ = "0.1.0"

__all__ = [
    "SPEED_OF_LIGHT", "BistaticParams", "Beamformer", "ChannelRealization", "ConfigurationError",
    "DegenerateGeometryError", "EstimateResult", "GMLGridEstimator", "RxGrid", "SceneGeometry",
    "SearchGrid", "SubcarrierPlan", "SymbolGrid", "SystemConfig", "TargetState",
    "TwoStageLocalizer", "coarse_stage", "cp_from_area", "design_sector_beamformer",
    "fine_stage", "forward_geometry", "generate_symbols", "gml_objective", "grid_search",
    "link_snr", "make_plan", "path_loss_rx", "path_loss_tx", "position_from_bistatic",
    "realize_channel", "simulate_frames", "steering_vector", "synthesize_rx",
    "two_stage_estimate",
]

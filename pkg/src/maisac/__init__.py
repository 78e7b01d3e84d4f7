"""Joint beamforming and movable-antenna placement for full-duplex ISAC base stations."""

from ._validation import (
    BisectionError,
    ConfigError,
    GeometryError,
    InfeasibleLayoutError,
    NumericalRankError,
)
from .channel import AntennaLayout, ChannelSet, build_channels, si_channel, uniform_layout
from .estimators import CFGSOptimizer, FixedArrayBeamformer, GradientAscentMA
from .experiments import RunRecord, SweepSpec, emit_results, profile_config
from .fp_solver import SolverOptions, SolverState, refresh_aux, run_beamforming_ao, solve_precoder
from .metrics import AuxVars, Beamformers, objective, scnr, sinr, surrogate
from .position import CfgsOptions, cfgs_optimize, coarse_search, fpa_solve, ga_ma_optimize, project_positions
from .scenario import Scenario, ScenarioConfig, load_config, sample_scenario

__version__ = "0.1.0"

"""Sum-rate maximization for a downlink served through a passive intelligent mirror."""

from .alternating import SolverOptions, Solution, Status, qos_violation, solve
from .baselines import BaselineResult, global_search, grid_oracle, random_phase_baseline
from .phase_mm import (ReducedMap, Surrogate, build_reduced_map, build_surrogate_paper, build_surrogate_spectral,
                       minimize_surrogate, mm_loop, objective_power)
from .power_wf import (PowerAllocation, WaterfillInput, feasibility_check, min_powers, waterfill_exact,
                       waterfill_paper)
from .scenario import ChannelSet, ConfigError, RngSeed, ScenarioConfig, generate_channels, snr_config
from .zf import PhaseVector, Precoder, RankDeficientError, cascade, power_cost, sinr, sum_rate, zf_precoder

__version__ = "0.1.0"

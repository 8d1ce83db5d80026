"""Energy-efficient hybrid precoding for massive MIMO LEO satellite downlinks."""
from .model import (CONTINUOUS, Architecture, ChannelState, ConfigError, PowerModel, SystemConfig,
                    array_response, link_budget_gamma, noise_power, sample_channel,
                    transmit_power_static)
from .metrics import energy_efficiency, monte_carlo_sum_rate, rate_upper_bound
from .digital import SolverError, dinkelbach_solve, wmmse_solve
from .feasible import AnalogPrecoder, PhaseShifterSpec, project_hull_matrix, round_to_feasible
from .hybrid import HybridPrecoder, MmSchedule, aim_adp, avpim_adp, factorize, npp_hybrid
from .harness import ExperimentKind, ExperimentSpec, emit_results, load_results, run_experiment

__version__ = "0.1.0"

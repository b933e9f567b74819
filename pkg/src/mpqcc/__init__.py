"""Three-user mode-pairing conference key distribution: simulation and security analysis."""

from .analytic import analytic_point, analytic_rates, fit_dark_count, fit_visibility
from .emitter import FrameSchedule, build_frame_schedule, sample_pulse
from .optics import DriftState, OpticsRun, advance_drift, detect, interference, run_optics, simulate_slot
from .pairing import SiftedBatch, classify_event, pair_clicks, pair_indices, sift, tally
from .phase import (ReferenceCounts, SignConvention, calibrate_sign_convention, compensate,
                    estimate_pair_phase, estimate_phases)
from .pipeline import analyze, process, simulate
from .security import (ConfidenceBound, DecoyBounds, DecoyError, SecurityAccounting, binary_entropy,
                       chernoff_bounds, decoy_lp_bounds, key_length, key_length_from, rate_conversion,
                       repeaterless_bound)
from .types import (ConfigError, PulseDescriptor, SystemConfig, Tag, User, load_config, operating_point,
                    validate_config)

__version__ = "0.1.0"

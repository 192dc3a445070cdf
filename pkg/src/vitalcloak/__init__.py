"""Key-based decoy obfuscation for wireless heartbeat sensing, simulated end to end."""

from .extraction import HeartBandFilter, HeartRateEstimate, NotchBank, estimate
from .fmcw import ACOUSTIC, MMWAVE, PRESETS, PhaseSeries, Scene, SensorProfile, get_profile, sense
from .obfuscation import (FrequencyMultiset, FrequencySpace, ObfuscationKey, collision_bound, dec,
                          enc_model, gen, guess_probability)
from .privacy_eval import PrivacyReport, TrialConfig, bayesian_adversary, run_abstract_game, run_game
from .signal_model import (ActuatorKernel, DecoyConfig, DisplacementSignal, PulseTrainSpec,
                           VitalSignSource, generate_pulse_train, superimpose, synthesize_heartbeat)

__version__ = "0.1.0"

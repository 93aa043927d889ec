"""Multi-resolution feature perturbation for domain-generalizable segmentation."""

from .hrfp import RandomStack, StackSpec, apply_o1, apply_o2, hrfp_forward, sample_stack
from .metrics import ConfusionMatrix, MIoUReport, StatEmbedding, accumulate, miou, mmd, stat_embedding
from .npplus import ChannelStats, StyleCoeffs, channel_stats, np_plus, sample_coeffs
from .rf_geometry import RFQuery, ScaleSchedule, make_schedule, rf_overcomplete, rf_undercomplete
from .spectral import BandEnergyReport, band_delta, band_energy
from .wrapper import PerturbConfig, Variant, WrappedModel, make_scfp, rgn_perturb, training_step_setup, wrap

__version__ = "0.1.0"

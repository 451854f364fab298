"""Scattering-function identification of WSSUS channels by weighted delta-train sounding."""

from .analysis import MCReport, monte_carlo, variance_bound
from .channel import (EchoEnsemble, SpreadingRealization, TrueACF, sample_spreading, simulate_echoes,
                      sound, true_acf)
from .gabor import (FrameMatrices, IllConditionedFrame, WeightSequence, build_frame_matrices,
                    gabor_vector, haar_check, random_weights)
from .grid import Cover, Grid, ScatteringFunction, assemble, build_cover, build_grid, extract_patches
from .ident import (PiTable, STable, estimate, estimate_raw, identify_oracle, pi_from_acf, pi_hat,
                    pihat_covariance_exact, reconstruct, s_transform)

__version__ = "0.1.0"

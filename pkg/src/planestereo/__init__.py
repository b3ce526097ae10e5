"""Piecewise-planar stereo: superpixel planes + occlusion-boundary labels
optimized jointly by particle-based convex message passing."""

from ._kernels import BACKEND_NAME, HAS_NUMBA
from .imagery import (DisparityImage, GroundTruth, Image, OcclusionState,
                      SynthConfig, SyntheticScene, generate_synthetic,
                      load_disparity, load_image, load_scene, save_disparity,
                      save_image, save_scene)
from .segmentation import (ColorHistogram, NeighborPair, Segment, Segmentation,
                           build_adjacency, chi_squared, slic)
from .matching import MatchConfig, match, passthrough
from .model import (BoundaryLabel, ModelParams, Plane, StereoModel,
                    plane_disparity, total_energy, truncated_quadratic)
from .inference import (FactorGraph, PcbpConfig, Solution, convex_bp,
                        discretize, fit_initial_planes, pcbp, sample_particles)
from .harness import (ErrorReport, StudyConfig, boundary_error, dense_disparity,
                      error_rate, evaluate, oracle_fit, rms, run_noise_study,
                      run_pipeline, run_scaling_study)

__version__ = "0.1.0"

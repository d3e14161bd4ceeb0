"""RGB-D activity recognition from rank-pooled dynamic images."""
from .errors import DataError
from .frame_io import Frame, FrameSequence, Modality, load_manifest, load_sequence
from .rank_pooling import (DynamicImage, PoolingInput, PoolingProblem, SolverConfig, approx_pool,
                           normalize_image, objective, solve_exact)
from .gestalt import binomial_tail, prune, sweep_thresholds
from .pipeline import EvalReport, PipelineConfig, run_pipeline

__all__ = [
    "DataError", "Frame", "FrameSequence", "Modality", "load_manifest", "load_sequence",
    "DynamicImage", "PoolingInput", "PoolingProblem", "SolverConfig", "approx_pool",
    "normalize_image", "objective", "solve_exact", "binomial_tail", "prune", "sweep_thresholds",
    "EvalReport", "PipelineConfig", "run_pipeline",
]

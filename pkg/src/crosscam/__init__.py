"""Deterministic simulator for a bandwidth-aware multi-camera tracking
pipeline: synthetic scenarios, frame filtering, simulated perception,
cross-camera identity association, tile-level RoI masking, a toy
lossless codec with an analytic bandwidth model, tracking accuracy
metrics, and a queryable metadata store.
"""

__version__ = "0.1.0"

from crosscam._kernels import backend as kernel_backend  # noqa: F401
from crosscam.pipeline import PipelineConfig, run_pipeline, sweep  # noqa: F401

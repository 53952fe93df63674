"""Facial micro-movement measurement on a canonical face canvas.

The analysis runs in four steps: ingest per-frame face-mesh landmarks, embed
each frame into a canonical face via per-triangle affine maps, measure
micro-movements with patch-based optical flow on the canonical canvas, and
inverse-map the displacement field back onto the original frames as arrows.
"""

from .facemesh import (
    CanonicalModel,
    FaceMesh,
    Frame,
    FrameSequence,
    ValidationError,
    canonical_model_json,
    load_canonical_model,
    load_landmark_sequence,
    locate_triangle,
    save_canonical_model,
    save_landmark_sequence,
    triangle_index_map,
)
from .optflow import (
    FlowField,
    FlowParams,
    GradientField,
    compute_flow,
    lk_solve_at,
    read_flow,
    spatial_gradients,
    temporal_gradient,
    write_flow,
    write_flow_csv,
)
from .overlay import (
    Arrow,
    OverlayStyle,
    coverage_fraction,
    render_arrows,
    select_arrows,
)
from .pipeline import FrameResult, PipelineConfig, run_pipeline, summarize
from .warp import (
    CanonicalFrame,
    DegenerateTriangleError,
    OutOfMeshError,
    SingularTransformError,
    TriangleAffine,
    apply_affine,
    invert_affine,
    map_vector_to_original,
    solve_affine,
    warp_to_canonical,
)

__version__ = "0.1.0"

__all__ = [
    "Arrow",
    "CanonicalFrame",
    "CanonicalModel",
    "DegenerateTriangleError",
    "FaceMesh",
    "FlowField",
    "FlowParams",
    "Frame",
    "FrameResult",
    "FrameSequence",
    "GradientField",
    "OutOfMeshError",
    "OverlayStyle",
    "PipelineConfig",
    "SingularTransformError",
    "TriangleAffine",
    "ValidationError",
    "apply_affine",
    "canonical_model_json",
    "compute_flow",
    "coverage_fraction",
    "invert_affine",
    "lk_solve_at",
    "load_canonical_model",
    "load_landmark_sequence",
    "locate_triangle",
    "map_vector_to_original",
    "read_flow",
    "render_arrows",
    "run_pipeline",
    "save_canonical_model",
    "save_landmark_sequence",
    "select_arrows",
    "solve_affine",
    "spatial_gradients",
    "summarize",
    "temporal_gradient",
    "triangle_index_map",
    "warp_to_canonical",
    "write_flow",
    "write_flow_csv",
]

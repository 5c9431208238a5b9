"""Crowd-flow saliency detection.

Transforms dense-flow stability and phase features into pairwise similarity
structures, ranks all particles on the induced graph against random queries,
and reports extremal regions.
"""

from .flowfield import (
    FlowField,
    FlowSequence,
    GridSpec,
    block_centers,
    block_edges,
    downsample_to_grid,
    load_flo,
    load_sequence,
    mean_flow,
    save_flo,
    save_sequence,
)
from .scenes import (
    Agent,
    NoiseSpec,
    Saddle,
    SceneSpec,
    Sink,
    Source,
    UniformLane,
    inject_noise,
    load_scene,
    save_scene,
    scene_ground_truth,
    synth_scene,
)
from .advection import DisplacementField, Pathline, advect, flow_map, sample_velocity
from .stability import (
    PairwiseMap,
    StabilityField,
    ftle,
    ftle_field,
    jacobian,
    jacobian_field,
    stability_structure,
)
from .phase import EPSILON_STATIC, compute_static_mask, phase_shift, phase_structure
from .ranking import (
    AffinityGraph,
    ExtremaResult,
    FeatureSet,
    Region,
    RegionSet,
    ScoreVector,
    aggregate_ranks,
    assemble_features,
    build_affinity,
    extract_extrema,
    knn_graph,
    normalized_operator,
    rank,
    regions_from_mask,
    sample_queries,
)
from .evaluation import (
    CategoryCounts,
    GroundTruth,
    GroundTruthEntry,
    MatchReport,
    f_measure,
    load_ground_truth,
    match_detections,
    overlap,
    save_ground_truth,
    summary_table,
)
from .geometry import Rect
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    WindowResult,
    load_regions,
    render_heatmap,
    run_pipeline,
    run_window,
    save_regions,
)

__version__ = "0.1.0"

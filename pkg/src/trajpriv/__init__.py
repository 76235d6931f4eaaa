"""trajpriv: differentially private trajectory synthesis and evaluation."""

from .conditional import (
    AffineMap,
    CondEmbedConfig,
    CondEmbedding,
    ConditionalEmbedder,
    compress,
    decompress,
    noise_schedule_mix,
    privatize,
    sample_conditionals,
)
from .dp import (
    NoiseSpec,
    PrivacyBudget,
    amplify_by_subsampling,
    analytic_gaussian_sigma,
    calibrate_base_epsilon,
    clip_norm,
    laplace_sample,
    laplace_scale,
    scale_to_norm,
    vmf_sample,
)
from .geo import (
    BoundingBox,
    DatasetPreset,
    FoldSplit,
    GeoPoint,
    PRESETS,
    Trajectory,
    TrajectoryDataset,
    TrajectoryPreprocessor,
    filter_bbox,
    haversine_distance,
    haversine_m,
    kfold_split,
    normalize_coords,
    denormalize_coords,
    resample_to_length,
    split_dataset,
)
from .harness import CaseConfig, RunResult, emit_density_grid, run_case, write_report
from .io import DatasetFormatError, load_dataset, save_dataset
from .markov import (
    AdaptiveGrid,
    MarkovModel,
    MarkovSynthesizer,
    SynthConfig,
    build_grid,
    fit_markov_dp,
    generate_walks,
    to_trajectories,
)
from .metrics import (
    EvalConfig,
    MetricReport,
    diameter_jsd,
    dtw,
    evaluate_pair,
    grid_jsd,
    hausdorff_points,
    haversine_norm,
    hotspot_sdc,
    hungarian_match,
    jsd,
    range_query_mre,
    sliced_wasserstein,
    traj_hausdorff,
    trip_error,
    ttd_jsd,
)

__version__ = "0.1.0"

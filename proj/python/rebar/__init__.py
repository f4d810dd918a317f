"""Learned time-series distance and contrastive encoders."""

from ._rebar import (
    OUTPUT_ROOT_ENV,
    ConfigError,
    ConsistencyError,
    Dataset,
    Encoder,
    FormatError,
    IoError,
    MissingArtifactError,
    NotFoundError,
    NumericError,
    RebarError,
    RebarModel,
    SizeError,
    ValidationError,
    adjusted_rand_index,
    auroc,
    average_precision,
    canonical_config,
    extended_mask,
    generate_synthetic,
    kmeans,
    load_dataset,
    load_encoder,
    load_rebar_model,
    normalized_mutual_info,
    random_encoder,
    random_rebar_model,
    receptive_field,
    run_cli,
    sliding_mse_distance,
    transient_mask,
)

__version__ = "0.1.0"

"""Synthetic input histories and labeled training data."""
from .dataset import (
    DEFAULT_GRID,
    Dataset,
    generate_dataset,
    label_entry,
    merge_datasets,
    read_dataset,
    write_dataset,
)
from .sampler import SamplerConfig, sample_knots, sample_trajectory

__all__ = [
    "DEFAULT_GRID", "Dataset", "SamplerConfig", "generate_dataset", "label_entry",
    "merge_datasets", "read_dataset", "sample_knots", "sample_trajectory", "write_dataset",
]

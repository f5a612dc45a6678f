"""Synthetic multiplexed qubit readout, state discriminators and fidelity metrics."""

from .core import IQTrace, PreparedLabel, SampleGrid, ShotDataset, read_dataset, write_dataset
from .simulator import SimConfig, generate_dataset, generate_shot

__version__ = "0.1.0"

__all__ = [
    "IQTrace",
    "PreparedLabel",
    "SampleGrid",
    "ShotDataset",
    "SimConfig",
    "generate_dataset",
    "generate_shot",
    "read_dataset",
    "write_dataset",
]

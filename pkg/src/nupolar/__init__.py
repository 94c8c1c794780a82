"""nupolar: electron-neutrino vs cosmogenic-background classification for
two-view LAr-TPC event images.

Pipeline: polar charge-histogram descriptors around the primary
interaction vertex -> from-scratch random forest -> repeated stratified
cross-validation with PIV-noise and energy-range robustness sweeps, driven
by a seedable synthetic event generator.
"""

__version__ = "0.1.0"

from .descriptor import DescriptorConfig, build_descriptor, charge_histogram
from .events import Dataset, Event, ViewImage, load_dataset, save_dataset
from .forest import ForestConfig, ForestModel, train_forest
from .synthgen import GenParams, generate_dataset, generate_event, perturb_piv

__all__ = [
    "__version__",
    "DescriptorConfig",
    "build_descriptor",
    "charge_histogram",
    "Dataset",
    "Event",
    "ViewImage",
    "load_dataset",
    "save_dataset",
    "ForestConfig",
    "ForestModel",
    "train_forest",
    "GenParams",
    "generate_dataset",
    "generate_event",
    "perturb_piv",
]

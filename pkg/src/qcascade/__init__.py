"""Cascaded kernel-SVM classification of three-qubit entanglement classes."""

from .qcore import features_of, state_of_features
from .sampling import LabeledDataset, RngSeed, build_dataset
from .svm import KernelSpec, SvmModel
from .cascade import CascadeModel, classify

__version__ = "0.1.0"

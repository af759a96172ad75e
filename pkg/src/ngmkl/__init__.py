"""Neural generalisation of multiple kernel learning."""

from .data import Dataset, RangeScaler, load_libsvm, load_manifest, make_split
from .kernels import Gaussian, Polynomial, base_kernel_bank, gram, gram_bank
from .mkl import MKLClassifier
from .network import NGMKLClassifier, TrainConfig
from .svm import KernelSVC

__all__ = [
    "Dataset", "RangeScaler", "load_libsvm", "load_manifest", "make_split",
    "Gaussian", "Polynomial", "base_kernel_bank", "gram", "gram_bank",
    "MKLClassifier", "NGMKLClassifier", "TrainConfig", "KernelSVC",
]

__version__ = "0.1.0"

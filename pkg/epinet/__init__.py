"""Epitomic convolution networks in NumPy.

Mini-epitome and topographic epitome layers, with optional mean+contrast
normalization, next to baseline conv and max-pool layers; trained by SGD on
MNIST and CIFAR-10 and validated by finite-difference gradient checks.
"""

__version__ = "0.1.0"

"""Tangent-space estimation from gradients of low-frequency graph-Laplacian eigenvectors."""
__version__ = "0.1.0"

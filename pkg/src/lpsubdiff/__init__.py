"""Computable subdifferentials of the sparsity functionals ``integral |u|^p`` and the support measure."""

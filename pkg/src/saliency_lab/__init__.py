"""Desk-scale adversarial saliency prediction.

Subpackages map onto the pipeline: :mod:`tensor` kernels, :mod:`autodiff`
engine, :mod:`model` networks, :mod:`loss` objectives, :mod:`train` loops,
:mod:`metrics` evaluation, :mod:`data` files and synthetic data, :mod:`cli`.
"""

__version__ = "0.1.0"

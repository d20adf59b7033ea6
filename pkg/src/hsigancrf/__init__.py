"""Semi-supervised spectral-spatial GAN with dense-CRF map refinement for
hyperspectral image classification.

Subpackages split along the pipeline: ``tensors`` (layer forward/backward
numerics), ``gan`` (model, losses, training), ``crf`` (dense mean-field
refinement), ``data`` (containers, sampling, synthetic scenes), ``evaluate``
(metrics and map rendering), ``cli`` (operator entry point). The hot kernels
live in ``_kernels`` with a compiled core and a NumPy fallback.
"""

from hsigancrf._kernels import kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]

"""Heat conduction with fading memory and dynamic Wentzell boundary conditions.

Layers: ``geometry`` (P1 meshes), ``wentzell`` (operator, eigenbasis, static
problem), ``memory`` (kernels and past-history variable), ``nonlinear``
(reaction terms and their checks), ``galerkin`` (modal time stepping),
``analysis`` (energies, monitors, studies), ``config`` and ``cli``.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CogurError,
    ConfigurationError,
    InadmissibleKernelError,
    NumericalError,
    ResourceError,
    ShapeError,
    UnsupportedParameterError,
    ValidationError,
)

__all__ = [
    "CogurError",
    "ConfigurationError",
    "InadmissibleKernelError",
    "NumericalError",
    "ResourceError",
    "ShapeError",
    "UnsupportedParameterError",
    "ValidationError",
    "__version__",
]

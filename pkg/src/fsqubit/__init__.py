"""Fine-structure qubit in an optical tweezer: shifts, dynamics, analysis."""

from __future__ import annotations

__version__ = "0.1.0"

from .params import (  # noqa: F401
    FieldEnvironment,
    MagneticField,
    NoiseModel,
    TweezerConfig,
)

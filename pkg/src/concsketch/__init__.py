"""Concurrent KMV Theta and Quantiles sketches with relaxation analysis tools."""

from .core import ComposableSketch, Oracle, as_bytes, encode_int
from .engine import ConcurrentSketch, EngineConfig, LockedSketch, engine_start
from .quantiles import EmptySketchError, QuantilesSketch, quantiles_factory, zip_tuples
from .theta import ThetaSketch, ThetaSnapshot, theta_factory

__version__ = "0.1.0"

__all__ = [
    "ComposableSketch",
    "ConcurrentSketch",
    "EmptySketchError",
    "EngineConfig",
    "LockedSketch",
    "Oracle",
    "QuantilesSketch",
    "ThetaSketch",
    "ThetaSnapshot",
    "as_bytes",
    "encode_int",
    "engine_start",
    "quantiles_factory",
    "theta_factory",
    "zip_tuples",
]

"""Telegraph particles: exact collision laws and an event-driven simulator."""

from .core import APPROACH, SEPARATION, GasConfig, Params, PatternPair, kac_params

__all__ = ["Params", "PatternPair", "GasConfig", "APPROACH", "SEPARATION", "kac_params"]
__version__ = "0.1.0"

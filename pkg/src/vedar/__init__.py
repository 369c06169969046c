"""Streaming behaviour change detection with accountable alerts."""

from .core import ChangeAlert, ChangeType, DetectorConfig, RingBuffer, TimedValue
from .detector import Detector, DetectorOutput, detect

__all__ = [
    "ChangeAlert", "ChangeType", "Detector", "DetectorConfig", "DetectorOutput",
    "RingBuffer", "TimedValue", "detect",
]
__version__ = "0.1.0"

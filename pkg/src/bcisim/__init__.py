"""Simulator for clusters of wirelessly networked brain implants.

Subpackages cover signals and similarity measures, hashing and the wire
codec, the processing-element catalog and per-node storage, the
intra-cluster radio and clock sync, channel scheduling, the applications
built on top, and the interactive query engine.
"""
from .errors import (BciSimError, CapacityError, ConfigurationError, DataExpiredError, FramingError,
                     InfeasibleError, IntegrityError, PlanningError, QuerySyntaxError, ScheduleViolation,
                     SyncFailure)

__version__ = "0.1.0"

__all__ = [
    "BciSimError", "CapacityError", "ConfigurationError", "DataExpiredError", "FramingError", "InfeasibleError",
    "IntegrityError", "PlanningError", "QuerySyntaxError", "ScheduleViolation", "SyncFailure", "__version__",
]

"""Priority adjustment and schedulability analysis for mixed TT/AVB/BE TSN flows."""
from .adjust import Solution, orchestrate, schedule_static, schedule_upgrade, verify_solution
from .config import ShaperConfig
from .model import (
    ConfigurationError,
    Flow,
    Link,
    Network,
    Node,
    NodeKind,
    PriorityClass,
    RoutingError,
    ValidationError,
    hyperperiod,
    shortest_route,
    transmission_time,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "Flow", "Link", "Network", "Node", "NodeKind", "PriorityClass",
    "RoutingError", "ShaperConfig", "Solution", "ValidationError", "hyperperiod",
    "orchestrate", "schedule_static", "schedule_upgrade", "shortest_route",
    "transmission_time", "verify_solution",
]

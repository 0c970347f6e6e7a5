from .kernel import (
    CLOUD, CLOUD_LAN, CLUSTERS, CRASHED, DEFAULT_LATENCY, DOMAINS, EDGE, EDGE_LAN,
    UP, WAN, Call, DurableStore, Link, Message, Node, Simulation, SimulationError,
    Sleep, Task, lan_of,
)
from .trace import KERNEL, TraceEvent, TraceFormatError, parse_line, read_trace, write_trace

__all__ = [
    "CLOUD", "CLOUD_LAN", "CLUSTERS", "CRASHED", "DEFAULT_LATENCY", "DOMAINS", "EDGE",
    "EDGE_LAN", "UP", "WAN", "Call", "DurableStore", "Link", "Message", "Node",
    "Simulation", "SimulationError", "Sleep", "Task", "lan_of", "KERNEL", "TraceEvent",
    "TraceFormatError", "parse_line", "read_trace", "write_trace",
]

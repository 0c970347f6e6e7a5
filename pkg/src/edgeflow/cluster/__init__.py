from .agent import Generate, NodeAgent
from .config import (FAILED, MASTER, SUSPECTED, UP, WORKER, ClusterConfig, Command, ConfigEntry,
                     ConfigError, NodeDescriptor)
from .controller import (AdminCommand, Controller, Heartbeat, MetadataUpdate, pick_replica_node,
                         reschedule_on_failure, schedule_stage)
from .raft import ConfigServer
from .timing import Timing

__all__ = [
    "Generate", "NodeAgent", "FAILED", "MASTER", "SUSPECTED", "UP", "WORKER", "ClusterConfig",
    "Command", "ConfigEntry", "ConfigError", "NodeDescriptor", "AdminCommand", "Controller",
    "Heartbeat", "MetadataUpdate", "pick_replica_node", "reschedule_on_failure", "schedule_stage",
    "ConfigServer", "Timing",
]

from .format import (CheckSpec, FaultEvent, MoveItem, NodeDef, Scenario, ScenarioError, TopicDef,
                     WorkloadItem, format_scenario, parse_scenario)
from .run import RunResult, builtin_names, builtin_scenarios, execute, load_builtin, load_scenario
from .world import World

__all__ = [
    "CheckSpec", "FaultEvent", "MoveItem", "NodeDef", "Scenario", "ScenarioError", "TopicDef",
    "WorkloadItem", "format_scenario", "parse_scenario", "RunResult", "builtin_names",
    "builtin_scenarios", "execute", "load_builtin", "load_scenario", "World",
]

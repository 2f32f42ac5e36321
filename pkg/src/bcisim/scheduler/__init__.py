"""Channel allocation across nodes: task graphs, flows, the ILP, its solvers, and schedules."""
from .flows import Flow, FlowClass, classify, enumerate_flows, enumerate_task_flows
from .graphs import GRAPHS, hash_throughput_graph, movement_graph, raw_dtw_graph, seizure_graph, spike_sort_graph
from .ilp import IlpInstance, Row, build_ilp, simple_instance
from .schedule import (ClassPlan, NodePlan, Schedule, ValidationReport, build_schedule, reduced_instance,
                       reduced_solve, solve, validate_schedule)
from .solver import Solution, exhaustive_solve, solve_instance
from .taskgraph import Cluster, Edge, Stage, Task, TaskGraph

__all__ = [
    "Cluster", "Edge", "Stage", "Task", "TaskGraph", "Flow", "FlowClass", "classify", "enumerate_flows",
    "enumerate_task_flows", "IlpInstance", "Row", "build_ilp", "simple_instance", "Solution", "solve_instance",
    "exhaustive_solve", "Schedule", "ClassPlan", "NodePlan", "ValidationReport", "build_schedule", "solve",
    "reduced_solve", "reduced_instance", "validate_schedule", "GRAPHS", "seizure_graph", "hash_throughput_graph",
    "raw_dtw_graph", "movement_graph", "spike_sort_graph",
]

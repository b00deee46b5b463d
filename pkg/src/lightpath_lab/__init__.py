"""Simulation and learning toolkit for routing and wavelength assignment
with lightpath reuse (RWA-LR) on fixed-grid optical networks.

The package is organised around six pieces:

- :mod:`lightpath_lab.topology`: topology loading and k-shortest candidate
  paths with configurable ordering.
- :mod:`lightpath_lab.physical_layer`: per-path Shannon capacities from
  per-link noise-to-signal ratios.
- :mod:`lightpath_lab.environment`: the incremental-loading RWA-LR state
  machine with action masking.
- :mod:`lightpath_lab.heuristics`: KSP-FF and FF-KSP baselines.
- :mod:`lightpath_lab.agent`: graph-attention policy/value networks and the
  PPO learner.
- :mod:`lightpath_lab.harness`: evaluation campaigns (sweeps, paired runs,
  learning curves).
"""

__version__ = "0.1.0"

from lightpath_lab.topology import (
    Topology,
    CandidatePath,
    PathTable,
    Ordering,
    load_topology,
    k_shortest_paths,
    build_path_table,
)
from lightpath_lab.physical_layer import (
    TransmissionConfig,
    TableDrivenNsr,
    ClosedFormGnNsr,
    load_nsr_model,
    path_capacity,
    max_services,
)
from lightpath_lab.environment import (
    ServiceRequest,
    Action,
    ActionKind,
    EpisodeConfig,
    TerminationMode,
    RwaLrEnv,
)
from lightpath_lab.heuristics import HeuristicPolicy, ksp_ff, ff_ksp

__all__ = [
    "Topology",
    "CandidatePath",
    "PathTable",
    "Ordering",
    "load_topology",
    "k_shortest_paths",
    "build_path_table",
    "TransmissionConfig",
    "TableDrivenNsr",
    "ClosedFormGnNsr",
    "load_nsr_model",
    "path_capacity",
    "max_services",
    "ServiceRequest",
    "Action",
    "ActionKind",
    "EpisodeConfig",
    "TerminationMode",
    "RwaLrEnv",
    "HeuristicPolicy",
    "ksp_ff",
    "ff_ksp",
]

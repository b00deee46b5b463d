"""Graph-structured observations of the network state.

Edges carry per-channel spectrum occupancy (and, by default, the normalized
remaining capacity of the occupying lightpath); the current request is a
global feature; nodes get their degree plus source/destination incidence
flags.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lightpath_lab.environment import NetworkState, ServiceRequest
from lightpath_lab.physical_layer import max_services
from lightpath_lab.topology import PathTable


@dataclass(frozen=True)
class ObservationConfig:
    """Feature switches, fixed at configuration time.

    ``include_capacity_features`` appends a per-channel remaining-capacity
    value (normalized to [0, 1] by the largest slot budget in the path
    table) to each edge's binary occupancy vector, so reuse decisions can
    see how much headroom an occupying lightpath has left. Free channels
    read 0 there.
    """

    include_capacity_features: bool = True

    def to_json(self) -> dict:
        return {"include_capacity_features": self.include_capacity_features}


@dataclass(frozen=True)
class GraphObservation:
    node_features: np.ndarray  # [num_nodes, 3]
    edge_features: np.ndarray  # [num_links, S] or [num_links, 2S]
    global_features: np.ndarray  # [2 * num_nodes + 1]


class ObservationEncoder:
    """Deterministic encoder from (state, request) to a GraphObservation."""

    def __init__(
        self,
        table: PathTable,
        request_size_gbps: float = 100.0,
        config: ObservationConfig | None = None,
    ):
        self.table = table
        self.config = config or ObservationConfig()
        topo = table.topology
        self.num_nodes = topo.num_nodes
        self.num_links = topo.num_links
        degrees = np.zeros(self.num_nodes)
        for link in topo.links:
            degrees[topo.node_index(link.a)] += 1
            degrees[topo.node_index(link.b)] += 1
        self._degree_feature = degrees / degrees.max()
        self.request_size_gbps = request_size_gbps
        slot_budgets = [
            max_services(p.capacity_gbps, request_size_gbps)
            for row in table.paths
            for p in row
        ]
        # Largest per-lightpath slot budget; normalizes capacity features.
        self._slot_norm = float(max(max(slot_budgets), 1))

    @property
    def node_feature_dim(self) -> int:
        return 3

    def edge_feature_dim(self, num_channels: int) -> int:
        return 2 * num_channels if self.config.include_capacity_features else num_channels

    @property
    def global_feature_dim(self) -> int:
        return 2 * self.num_nodes + 1

    def encode(self, state: NetworkState, request: ServiceRequest) -> GraphObservation:
        occ = state.occupancy
        occupied = (occ != 0).astype(np.float32)
        if self.config.include_capacity_features:
            # lp_slots[0] == 0, so free cells automatically read 0 headroom.
            headroom = (state.lp_slots[occ] / self._slot_norm).astype(np.float32)
            edge = np.concatenate([occupied, headroom], axis=1)
        else:
            edge = occupied

        node = np.zeros((self.num_nodes, 3), dtype=np.float32)
        node[:, 0] = self._degree_feature
        node[request.source, 1] = 1.0
        node[request.destination, 2] = 1.0

        glob = np.zeros(self.global_feature_dim, dtype=np.float32)
        glob[request.source] = 1.0
        glob[self.num_nodes + request.destination] = 1.0
        glob[-1] = request.size_gbps / self.request_size_gbps
        return GraphObservation(
            node_features=node, edge_features=edge, global_features=glob
        )

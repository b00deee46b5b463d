"""Graph attention networks for the policy and value functions.

One message-passing round: (1) each edge's features are concatenated with
both endpoint node features and the global features, (2) an MLP transforms
them, (3) a learned attention layer scores each (node, incident edge) pair
and the scores are softmax-normalized over each node's incident edges,
(4) the weighted transformed edge features are summed at their incident
nodes, (5) node, global and aggregated edge features are concatenated and
(6) transformed by an MLP into the new node features. The transformed edge
features feed the next round and, after the last round, the readouts.

The policy readout sums the final edge features along each candidate path,
divides by the hop count, and projects to one score per WDM channel, giving
a K x S action grid; invalid cells are forced to exactly zero probability.
The value readout mean-pools node features, appends the global features and
maps to a scalar. Both networks are full, separate GATs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from lightpath_lab.topology import PathTable


@dataclass(frozen=True)
class GatConfig:
    latent_dim: int = 128
    message_passing_rounds: int = 3
    mlp_layers: int = 2

    def to_json(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "message_passing_rounds": self.message_passing_rounds,
            "mlp_layers": self.mlp_layers,
        }


@dataclass
class GraphSpec:
    """Static graph structure shared by every observation of one topology.

    ``endpoint_u``/``endpoint_v`` give each undirected link's endpoints; the
    incidence arrays enumerate the 2E (node, edge) pairs used for attention
    and aggregation, so each link contributes messages to both endpoints.
    """

    num_nodes: int
    num_edges: int
    endpoint_u: torch.Tensor
    endpoint_v: torch.Tensor
    incidence_node: torch.Tensor = field(init=False)
    incidence_edge: torch.Tensor = field(init=False)

    def __post_init__(self) -> None:
        self.incidence_node = torch.cat([self.endpoint_u, self.endpoint_v])
        self.incidence_edge = torch.cat(
            [torch.arange(self.num_edges), torch.arange(self.num_edges)]
        )

    @classmethod
    def from_table(cls, table: PathTable) -> "GraphSpec":
        topo = table.topology
        u = torch.tensor([topo.node_index(l.a) for l in topo.links], dtype=torch.long)
        v = torch.tensor([topo.node_index(l.b) for l in topo.links], dtype=torch.long)
        return cls(num_nodes=topo.num_nodes, num_edges=topo.num_links, endpoint_u=u, endpoint_v=v)


def _mlp(in_dim: int, out_dim: int, hidden: int, layers: int) -> nn.Sequential:
    """Stack of `layers` linear maps with tanh between them (smooth, which
    keeps finite-difference gradient checks meaningful)."""
    mods: list[nn.Module] = []
    dim = in_dim
    for _ in range(max(layers - 1, 0)):
        mods += [nn.Linear(dim, hidden), nn.Tanh()]
        dim = hidden
    mods.append(nn.Linear(dim, out_dim))
    return nn.Sequential(*mods)


def segment_softmax(scores: torch.Tensor, segments: torch.Tensor, num_segments: int) -> torch.Tensor:
    """Softmax of ``scores`` grouped by ``segments`` along dim 1.

    scores: [B, M]; segments: [M] int64 in [0, num_segments). Scores in each
    segment sum to one after normalization.
    """
    b = scores.shape[0]
    neg = torch.full(
        (b, num_segments), torch.finfo(scores.dtype).min, dtype=scores.dtype, device=scores.device
    )
    seg_max = neg.scatter_reduce(
        1, segments.expand(b, -1), scores, reduce="amax", include_self=True
    )
    shifted = torch.exp(scores - seg_max[:, segments])
    denom = torch.zeros(b, num_segments, dtype=scores.dtype, device=scores.device)
    denom = denom.index_add(1, segments, shifted)
    return shifted / denom[:, segments]


class GatBackbone(nn.Module):
    """Message-passing trunk producing node and edge latents."""

    def __init__(
        self,
        graph: GraphSpec,
        node_dim: int,
        edge_dim: int,
        global_dim: int,
        config: GatConfig,
    ):
        super().__init__()
        self.graph = graph
        self.config = config
        latent = config.latent_dim
        self.edge_mlps = nn.ModuleList()
        self.att_layers = nn.ModuleList()
        self.node_mlps = nn.ModuleList()
        n_dim, e_dim = node_dim, edge_dim
        for _ in range(config.message_passing_rounds):
            self.edge_mlps.append(
                _mlp(e_dim + 2 * n_dim + global_dim, latent, latent, config.mlp_layers)
            )
            self.att_layers.append(nn.Linear(n_dim + latent, 1))
            self.node_mlps.append(
                _mlp(n_dim + global_dim + latent, latent, latent, config.mlp_layers)
            )
            n_dim, e_dim = latent, latent

    def _round(
        self, i: int, node: torch.Tensor, edge: torch.Tensor, glob: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        g = self.graph
        b = node.shape[0]
        glob_e = glob[:, None, :].expand(b, g.num_edges, -1)
        concat = torch.cat(
            [edge, node[:, g.endpoint_u], node[:, g.endpoint_v], glob_e], dim=-1
        )
        msg = self.edge_mlps[i](concat)

        msg_inc = msg[:, g.incidence_edge]
        node_inc = node[:, g.incidence_node]
        scores = self.att_layers[i](torch.cat([node_inc, msg_inc], dim=-1)).squeeze(-1)
        alpha = segment_softmax(scores, g.incidence_node, g.num_nodes)
        agg = torch.zeros(
            b, g.num_nodes, msg.shape[-1], dtype=msg.dtype, device=msg.device
        )
        agg = agg.index_add(1, g.incidence_node, alpha[..., None] * msg_inc)

        glob_n = glob[:, None, :].expand(b, g.num_nodes, -1)
        new_node = self.node_mlps[i](torch.cat([node, glob_n, agg], dim=-1))
        return new_node, msg, alpha

    def forward(
        self, node: torch.Tensor, edge: torch.Tensor, glob: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """node: [B,N,Fn], edge: [B,E,Fe], glob: [B,Fg] -> latents."""
        for i in range(self.config.message_passing_rounds):
            node, edge, _ = self._round(i, node, edge, glob)
        return node, edge, glob

    def attention_weights(
        self, node: torch.Tensor, edge: torch.Tensor, glob: torch.Tensor, round_idx: int = 0
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Attention coefficients of one round (they sum to 1 per node)."""
        for i in range(self.config.message_passing_rounds):
            node, edge, alpha = self._round(i, node, edge, glob)
            if i == round_idx:
                return alpha, self.graph.incidence_node
        raise IndexError(f"round {round_idx} out of range")


class PathReadout:
    """Static per-pair path tensors for the K x S policy readout.

    ``link_matrix[p, k]`` holds the link indices of pair p's rank-k path,
    padded with ``num_edges`` (a zero row appended to the edge scores), and
    ``hop_counts[p, k]`` the divisor. Ranks beyond a pair's actual path
    count keep an all-pad row; their scores are finite but the environment
    mask marks them invalid.
    """

    def __init__(self, table: PathTable):
        self.k = table.k
        self.num_edges = table.topology.num_links
        max_hops = max(p.hops for row in table.paths for p in row)
        links = np.full((table.num_pairs, table.k, max_hops), self.num_edges, dtype=np.int64)
        hops = np.ones((table.num_pairs, table.k), dtype=np.int64)
        for pidx, row in enumerate(table.paths):
            for rank, cand in enumerate(row):
                links[pidx, rank, : cand.hops] = cand.link_seq
                hops[pidx, rank] = cand.hops
        self.link_matrix = torch.from_numpy(links)
        self.hop_counts = torch.from_numpy(hops)


class PolicyNetwork(nn.Module):
    """GAT trunk plus per-channel path readout over the K x S action grid."""

    def __init__(
        self,
        graph: GraphSpec,
        table: PathTable,
        node_dim: int,
        edge_dim: int,
        global_dim: int,
        num_channels: int,
        config: GatConfig,
    ):
        super().__init__()
        self.backbone = GatBackbone(graph, node_dim, edge_dim, global_dim, config)
        # Final edge projection has width exactly S so each path contributes
        # one score per WDM channel.
        self.edge_out = nn.Linear(config.latent_dim, num_channels)
        self.readout = PathReadout(table)
        self.num_channels = num_channels

    def action_logits(
        self,
        node: torch.Tensor,
        edge: torch.Tensor,
        glob: torch.Tensor,
        pair_idx: torch.Tensor,
    ) -> torch.Tensor:
        """Unmasked K*S logits for a batch of observations.

        pair_idx: [B] table pair index of each sample's request.
        """
        _, edge_latent, _ = self.backbone(node, edge, glob)
        scores = self.edge_out(edge_latent)  # [B, E, S]
        b = scores.shape[0]
        pad = torch.zeros(b, 1, self.num_channels, dtype=scores.dtype, device=scores.device)
        padded = torch.cat([scores, pad], dim=1)  # pad index == num_edges
        links = self.readout.link_matrix.to(scores.device)[pair_idx]  # [B, K, H]
        hops = self.readout.hop_counts.to(scores.device)[pair_idx]  # [B, K]
        gathered = padded[torch.arange(b, device=scores.device)[:, None, None], links]
        per_path = gathered.sum(dim=2) / hops[..., None].to(scores.dtype)  # [B, K, S]
        return per_path.reshape(b, -1)


class ValueNetwork(nn.Module):
    """Separate GAT trunk with permutation-invariant scalar readout."""

    def __init__(
        self,
        graph: GraphSpec,
        node_dim: int,
        edge_dim: int,
        global_dim: int,
        config: GatConfig,
    ):
        super().__init__()
        self.backbone = GatBackbone(graph, node_dim, edge_dim, global_dim, config)
        self.head = _mlp(config.latent_dim + global_dim, 1, config.latent_dim, config.mlp_layers)

    def forward(self, node: torch.Tensor, edge: torch.Tensor, glob: torch.Tensor) -> torch.Tensor:
        node_latent, _, _ = self.backbone(node, edge, glob)
        pooled = node_latent.mean(dim=1)
        return self.head(torch.cat([pooled, glob], dim=-1)).squeeze(-1)


class MaskedCategorical:
    """Categorical over K*S cells with exactly zero mass on masked cells.

    Masked logits are set to -inf before the softmax, so masked cells have
    probability 0.0 exactly and can never be sampled. Construction with an
    all-false mask is an error; such requests must be blocked upstream
    without sampling.
    """

    def __init__(self, logits: torch.Tensor, mask: torch.Tensor):
        if not bool(mask.any(dim=-1).all()):
            raise ValueError("mask must have at least one valid cell per sample")
        self.mask = mask
        self.logits = torch.where(
            mask, logits, torch.tensor(-math.inf, dtype=logits.dtype, device=logits.device)
        )
        self.log_probs = self.logits - torch.logsumexp(self.logits, dim=-1, keepdim=True)

    @property
    def probs(self) -> torch.Tensor:
        return torch.exp(self.log_probs)

    def sample(self, generator: torch.Generator | None = None) -> torch.Tensor:
        return torch.multinomial(self.probs, 1, generator=generator).squeeze(-1)

    def log_prob(self, actions: torch.Tensor) -> torch.Tensor:
        return self.log_probs.gather(-1, actions[..., None]).squeeze(-1)

    def entropy(self) -> torch.Tensor:
        # Zero the log term on masked cells BEFORE multiplying: the masked
        # log-probs are -inf and 0 * inf would poison the backward pass.
        safe_logp = torch.where(self.mask, self.log_probs, torch.zeros_like(self.log_probs))
        return -(self.probs * safe_logp).sum(dim=-1)

    def argmax(self) -> torch.Tensor:
        return self.log_probs.argmax(dim=-1)

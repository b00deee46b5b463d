"""Checkpoint persistence and the greedy evaluation policy.

A checkpoint stores every learned parameter together with the
hyperparameters and a fingerprint of the environment configuration (path
table, channel grid, request size, feature switches). Loading against a
mismatched environment is refused rather than silently misinterpreting
weights.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from lightpath_lab.agent.networks import GatConfig, GraphSpec, MaskedCategorical, PolicyNetwork, ValueNetwork
from lightpath_lab.agent.observation import ObservationConfig, ObservationEncoder
from lightpath_lab.agent.ppo import PpoHyperparams
from lightpath_lab.environment import Action, RwaLrEnv
from lightpath_lab.physical_layer import TransmissionConfig
from lightpath_lab.topology import PathTable

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointConfigError(RuntimeError):
    """Checkpoint was produced for a different environment configuration."""


def environment_fingerprint(
    table: PathTable,
    transmission: TransmissionConfig,
    request_size_gbps: float,
    obs_config: ObservationConfig,
) -> str:
    """Stable hash of everything a checkpoint's weights are bound to."""
    doc = {
        "table": table.config_fingerprint(),
        "channels": transmission.channel_count,
        "symbol_rate_gbd": transmission.symbol_rate_gbd,
        "request_size_gbps": request_size_gbps,
        "observation": obs_config.to_json(),
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def save_checkpoint(path, learner, label: str = "ppo_gat") -> None:
    """Serialize a learner's parameters plus its configuration binding."""
    fingerprint = environment_fingerprint(
        learner.table,
        learner.transmission,
        learner.base_episode_config.request_size_gbps,
        learner.obs_config,
    )
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "label": label,
            "policy_state": learner.policy.state_dict(),
            "value_state": learner.value_net.state_dict(),
            "gat_config": learner.gat_config.to_json(),
            "observation_config": learner.obs_config.to_json(),
            "hyperparams": learner.hp.to_json(),
            "environment_fingerprint": fingerprint,
            "update_count": learner.update_count,
            "global_step": learner.global_step,
        },
        path,
    )


def load_checkpoint(
    path,
    table: PathTable,
    transmission: TransmissionConfig | None = None,
    request_size_gbps: float = 100.0,
):
    """Load a checkpoint bound to the given environment configuration.

    Raises :class:`CheckpointConfigError` when the stored fingerprint does
    not match the table/transmission/request configuration supplied here.
    """
    transmission = transmission or TransmissionConfig()
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointConfigError(
            f"unsupported checkpoint format {blob.get('format_version')}"
        )
    obs_config = ObservationConfig(**blob["observation_config"])
    expected = environment_fingerprint(table, transmission, request_size_gbps, obs_config)
    if blob["environment_fingerprint"] != expected:
        raise CheckpointConfigError(
            "checkpoint was trained against a different environment "
            "configuration (path table / channel grid / request size mismatch)"
        )
    gat_config = GatConfig(
        latent_dim=blob["gat_config"]["latent_dim"],
        message_passing_rounds=blob["gat_config"]["message_passing_rounds"],
        mlp_layers=blob["gat_config"]["mlp_layers"],
    )
    encoder = ObservationEncoder(table, request_size_gbps, obs_config)
    graph = GraphSpec.from_table(table)
    policy = PolicyNetwork(
        graph,
        table,
        node_dim=encoder.node_feature_dim,
        edge_dim=encoder.edge_feature_dim(transmission.channel_count),
        global_dim=encoder.global_feature_dim,
        num_channels=transmission.channel_count,
        config=gat_config,
    )
    policy.load_state_dict(blob["policy_state"])
    policy.eval()
    value_net = ValueNetwork(
        graph,
        node_dim=encoder.node_feature_dim,
        edge_dim=encoder.edge_feature_dim(transmission.channel_count),
        global_dim=encoder.global_feature_dim,
        config=gat_config,
    )
    value_net.load_state_dict(blob["value_state"])
    value_net.eval()
    hp = PpoHyperparams(**blob["hyperparams"])
    return policy, value_net, encoder, hp, blob


@dataclass
class AgentPolicy:
    """Evaluation policy wrapping a trained checkpoint.

    Greedy by default (argmax of the masked distribution); set
    ``sample=True`` with a seed for stochastic evaluation.
    """

    policy: PolicyNetwork
    encoder: ObservationEncoder
    num_channels: int
    label: str = "agent"
    sample: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        self._rng = torch.Generator().manual_seed(self.seed)

    @classmethod
    def from_checkpoint(
        cls,
        path,
        table: PathTable,
        transmission: TransmissionConfig | None = None,
        request_size_gbps: float = 100.0,
        sample: bool = False,
        seed: int = 0,
    ) -> "AgentPolicy":
        transmission = transmission or TransmissionConfig()
        policy, _, encoder, _, blob = load_checkpoint(
            path, table, transmission, request_size_gbps
        )
        return cls(
            policy=policy,
            encoder=encoder,
            num_channels=transmission.channel_count,
            label=str(blob.get("label", "agent")),
            sample=sample,
            seed=seed,
        )

    @property
    def policy_id(self) -> str:
        return self.label

    def act(self, env: RwaLrEnv, mask: np.ndarray | None = None) -> Action | None:
        if mask is None:
            mask = env.action_mask()
        flat_mask = mask.reshape(-1)
        if not flat_mask.any():
            return None
        request = env.state.current_request
        obs = self.encoder.encode(env.state, request)
        pair_idx = torch.tensor([env.table.pair_index(request.source, request.destination)])
        with torch.no_grad():
            logits = self.policy.action_logits(
                torch.from_numpy(obs.node_features)[None],
                torch.from_numpy(obs.edge_features)[None],
                torch.from_numpy(obs.global_features)[None],
                pair_idx,
            )
            dist = MaskedCategorical(logits, torch.from_numpy(flat_mask)[None])
            cell = dist.sample(self._rng) if self.sample else dist.argmax()
        rank, channel = divmod(int(cell.item()), self.num_channels)
        return Action(path_rank=rank, channel=channel)

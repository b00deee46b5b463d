"""PPO with invalid-action masking over parallel RWA-LR environments.

Synchronous on-policy training: N independent environments are stepped with
one batched policy evaluation per step, rollouts are scored with GAE, and
parameters are updated with the clipped surrogate objective for several
epochs of shuffled minibatches. The learning rate follows a warmup-cosine
schedule. Requests whose action mask is entirely false are blocked by the
environment without sampling; such forced steps carry no policy-gradient or
entropy term but keep their reward for the value targets.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import torch
from torch import nn

from lightpath_lab.agent.networks import (
    GatConfig,
    GraphSpec,
    MaskedCategorical,
    PolicyNetwork,
    ValueNetwork,
)
from lightpath_lab.agent.observation import ObservationConfig, ObservationEncoder
from lightpath_lab.environment import Action, EpisodeConfig, RwaLrEnv
from lightpath_lab.physical_layer import TransmissionConfig
from lightpath_lab.topology import PathTable


class TrainingFault(RuntimeError):
    """Raised when an update produces a non-finite loss."""


@dataclass
class PpoHyperparams:
    """All PPO knobs. Defaults follow the final tuned training run."""

    gamma: float = 0.919
    gae_lambda: float = 0.984
    learning_rate: float = 1.943e-5
    update_epochs: int = 10
    rollout_length: int = 150
    num_envs: int = 100
    total_timesteps: int = 200_000_000
    clip_ratio: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    num_minibatches: int = 4
    warmup_fraction: float = 0.1
    warmup_peak_multiplier: float = 2.0
    end_fraction: float = 0.1
    normalize_advantages: bool = True
    action_masking: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.gamma <= 1 or not 0 < self.gae_lambda <= 1:
            raise ValueError("gamma and lambda must lie in (0, 1]")
        for name in ("update_epochs", "rollout_length", "num_envs", "num_minibatches"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def num_updates(self) -> int:
        return max(self.total_timesteps // (self.rollout_length * self.num_envs), 1)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def lr_schedule(step: int, total_updates: int, hp: PpoHyperparams) -> float:
    """Warmup-cosine learning rate.

    Linear ramp from the base LR to peak_multiplier * base over the first
    warmup fraction of updates, then cosine decay to end_fraction * base at
    the final update. Continuous at the junction.
    """
    base = hp.learning_rate
    if total_updates <= 1:
        return base
    warmup_end = hp.warmup_fraction * total_updates
    if warmup_end > 0 and step <= warmup_end:
        return base * (1.0 + (hp.warmup_peak_multiplier - 1.0) * step / warmup_end)
    progress = (step - warmup_end) / (total_updates - warmup_end)
    cos = 0.5 * (1.0 + math.cos(math.pi * progress))
    return base * (hp.end_fraction + (hp.warmup_peak_multiplier - hp.end_fraction) * cos)


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap_value: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation with episode-boundary resets.

    Inputs are time-major [T, N]; ``dones[t]`` flags transitions that ended
    an episode, cutting the recursion. The rollout tail is bootstrapped with
    ``bootstrap_value`` (the value of the state after the last step).
    Returns (advantages, value targets), both [T, N].
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    t_len = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    carry = np.zeros(rewards.shape[1], dtype=np.float64)
    for t in reversed(range(t_len)):
        next_values = bootstrap_value if t == t_len - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values * nonterminal - values[t]
        carry = delta + gamma * lam * nonterminal * carry
        advantages[t] = carry
    return advantages, advantages + values


@dataclass
class TrajectoryBuffer:
    """Rollout storage, time-major [T, N, ...].

    ``forced`` marks steps the environment auto-blocked (all-false mask);
    they are excluded from the policy surrogate and entropy terms. The
    stored mask for forced rows is all-true so distributions stay well
    defined when re-evaluated during updates.
    """

    node: np.ndarray
    edge: np.ndarray
    glob: np.ndarray
    pair_idx: np.ndarray
    mask: np.ndarray
    action: np.ndarray
    log_prob: np.ndarray
    value: np.ndarray
    reward: np.ndarray
    done: np.ndarray
    forced: np.ndarray
    bootstrap_value: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @classmethod
    def allocate(cls, t_len, n_envs, node_shape, edge_shape, glob_dim, n_actions):
        return cls(
            node=np.zeros((t_len, n_envs, *node_shape), dtype=np.float32),
            edge=np.zeros((t_len, n_envs, *edge_shape), dtype=np.float32),
            glob=np.zeros((t_len, n_envs, glob_dim), dtype=np.float32),
            pair_idx=np.zeros((t_len, n_envs), dtype=np.int64),
            mask=np.zeros((t_len, n_envs, n_actions), dtype=bool),
            action=np.zeros((t_len, n_envs), dtype=np.int64),
            log_prob=np.zeros((t_len, n_envs), dtype=np.float32),
            value=np.zeros((t_len, n_envs), dtype=np.float32),
            reward=np.zeros((t_len, n_envs), dtype=np.float32),
            done=np.zeros((t_len, n_envs), dtype=np.float32),
            forced=np.zeros((t_len, n_envs), dtype=bool),
        )

    @property
    def size(self) -> int:
        return self.reward.shape[0] * self.reward.shape[1]

    def finalize(self, hp: PpoHyperparams) -> None:
        if self.bootstrap_value is None:
            raise ValueError("bootstrap values missing; collect a full rollout first")
        self.advantages, self.returns = gae(
            self.reward, self.value, self.done, self.bootstrap_value, hp.gamma, hp.gae_lambda
        )


def ppo_loss(
    policy: PolicyNetwork,
    value_net: ValueNetwork,
    batch: dict[str, torch.Tensor],
    hp: PpoHyperparams,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Clipped-surrogate total loss on one minibatch, with diagnostics.

    Kept separate from the update loop so gradients can be checked against
    finite differences on small instances.
    """
    dist = MaskedCategorical(
        policy.action_logits(batch["node"], batch["edge"], batch["glob"], batch["pair_idx"]),
        batch["mask"],
    )
    new_log_prob = dist.log_prob(batch["action"])
    active = 1.0 - batch["forced"].to(new_log_prob.dtype)
    n_active = active.sum().clamp_min(1.0)

    advantages = batch["advantages"]
    if hp.normalize_advantages:
        mean = (advantages * active).sum() / n_active
        var = (((advantages - mean) ** 2) * active).sum() / n_active
        advantages = (advantages - mean) / torch.sqrt(var + 1e-8)

    log_ratio = new_log_prob - batch["log_prob"]
    ratio = torch.exp(log_ratio)
    unclipped = ratio * advantages
    clipped = torch.clamp(ratio, 1.0 - hp.clip_ratio, 1.0 + hp.clip_ratio) * advantages
    policy_loss = -(torch.minimum(unclipped, clipped) * active).sum() / n_active

    values = value_net(batch["node"], batch["edge"], batch["glob"])
    value_loss = 0.5 * ((values - batch["returns"]) ** 2).mean()

    entropy = (dist.entropy() * active).sum() / n_active
    total = policy_loss + hp.value_coef * value_loss - hp.entropy_coef * entropy

    with torch.no_grad():
        clip_frac = (((ratio - 1.0).abs() > hp.clip_ratio).to(ratio.dtype) * active).sum() / n_active
        approx_kl = (-(log_ratio) * active).sum() / n_active
    diagnostics = {
        "policy_loss": float(policy_loss.detach()),
        "value_loss": float(value_loss.detach()),
        "entropy": float(entropy.detach()),
        "clip_fraction": float(clip_frac),
        "approx_kl": float(approx_kl),
    }
    return total, diagnostics


class PpoLearner:
    """Owns the networks, optimizer, and N parallel environments."""

    def __init__(
        self,
        table: PathTable,
        episode_config: EpisodeConfig,
        hp: PpoHyperparams,
        transmission: TransmissionConfig | None = None,
        gat_config: GatConfig | None = None,
        obs_config: ObservationConfig | None = None,
        seed: int = 0,
        device: str = "cpu",
        dtype: torch.dtype = torch.float32,
    ):
        self.table = table
        self.hp = hp
        self.transmission = transmission or TransmissionConfig()
        self.gat_config = gat_config or GatConfig()
        self.obs_config = obs_config or ObservationConfig()
        self.device = torch.device(device)
        self.dtype = dtype
        self.seed = seed
        self.num_channels = self.transmission.channel_count
        self.num_actions = table.k * self.num_channels

        torch.manual_seed(seed)
        self.sample_rng = torch.Generator(device="cpu").manual_seed(seed)

        self.encoder = ObservationEncoder(
            table, episode_config.request_size_gbps, self.obs_config
        )
        graph = GraphSpec.from_table(table)
        self.policy = PolicyNetwork(
            graph,
            table,
            node_dim=self.encoder.node_feature_dim,
            edge_dim=self.encoder.edge_feature_dim(self.num_channels),
            global_dim=self.encoder.global_feature_dim,
            num_channels=self.num_channels,
            config=self.gat_config,
        ).to(device=self.device, dtype=dtype)
        self.value_net = ValueNetwork(
            graph,
            node_dim=self.encoder.node_feature_dim,
            edge_dim=self.encoder.edge_feature_dim(self.num_channels),
            global_dim=self.encoder.global_feature_dim,
            config=self.gat_config,
        ).to(device=self.device, dtype=dtype)
        self.optimizer = torch.optim.Adam(
            list(self.policy.parameters()) + list(self.value_net.parameters()),
            lr=hp.learning_rate,
        )

        self.base_episode_config = episode_config
        self.envs = []
        self._episode_counts = [0] * hp.num_envs
        for i in range(hp.num_envs):
            env = RwaLrEnv(
                table,
                dataclasses.replace(episode_config, seed=(seed, i, 0)),
                self.transmission,
            )
            env.reset()
            self.envs.append(env)
        self.global_step = 0
        self.update_count = 0

    # -- acting --------------------------------------------------------------

    def _batch_tensors(self, obs_list, pair_idx):
        node = torch.from_numpy(np.stack([o.node_features for o in obs_list]))
        edge = torch.from_numpy(np.stack([o.edge_features for o in obs_list]))
        glob = torch.from_numpy(np.stack([o.global_features for o in obs_list]))
        return (
            node.to(device=self.device, dtype=self.dtype),
            edge.to(device=self.device, dtype=self.dtype),
            glob.to(device=self.device, dtype=self.dtype),
            torch.from_numpy(pair_idx).to(self.device),
        )

    def collect_rollout(self) -> tuple[TrajectoryBuffer, list[int]]:
        """Step all environments for rollout_length steps.

        Returns the filled buffer and the accepted-service counts of every
        episode that finished during the rollout.
        """
        hp = self.hp
        n = hp.num_envs
        obs0 = self.encoder.encode(self.envs[0].state, self.envs[0].state.current_request)
        buffer = TrajectoryBuffer.allocate(
            hp.rollout_length,
            n,
            obs0.node_features.shape,
            obs0.edge_features.shape,
            len(obs0.global_features),
            self.num_actions,
        )
        episode_accepted: list[int] = []

        for t in range(hp.rollout_length):
            obs_list, masks, pair_idx = [], [], np.zeros(n, dtype=np.int64)
            for i, env in enumerate(self.envs):
                req = env.state.current_request
                obs_list.append(self.encoder.encode(env.state, req))
                masks.append(env.action_mask().reshape(-1))
                pair_idx[i] = self.table.pair_index(req.source, req.destination)
            mask_arr = np.stack(masks)
            if hp.action_masking:
                forced = ~mask_arr.any(axis=1)
                safe_mask = mask_arr.copy()
                safe_mask[forced] = True
            else:
                # Unmasked ablation: the agent may sample invalid cells and
                # the environment blocks them with -1.
                forced = np.zeros(n, dtype=bool)
                safe_mask = np.ones_like(mask_arr)

            node, edge, glob, pair_t = self._batch_tensors(obs_list, pair_idx)
            with torch.no_grad():
                logits = self.policy.action_logits(node, edge, glob, pair_t)
                dist = MaskedCategorical(logits, torch.from_numpy(safe_mask).to(self.device))
                actions = dist.sample(self.sample_rng)
                log_probs = dist.log_prob(actions)
                values = self.value_net(node, edge, glob)

            buffer.node[t] = np.stack([o.node_features for o in obs_list])
            buffer.edge[t] = np.stack([o.edge_features for o in obs_list])
            buffer.glob[t] = np.stack([o.global_features for o in obs_list])
            buffer.pair_idx[t] = pair_idx
            buffer.mask[t] = safe_mask
            buffer.action[t] = actions.cpu().numpy()
            buffer.log_prob[t] = log_probs.to(torch.float32).cpu().numpy()
            buffer.value[t] = values.to(torch.float32).cpu().numpy()
            buffer.forced[t] = forced

            for i, env in enumerate(self.envs):
                if forced[i]:
                    step = env.apply_action(None)
                else:
                    rank, channel = divmod(int(buffer.action[t, i]), self.num_channels)
                    step = env.apply_action(Action(rank, channel))
                buffer.reward[t, i] = step.reward
                if env.is_terminated():
                    buffer.done[t, i] = 1.0
                    episode_accepted.append(env.state.accepted)
                    self._episode_counts[i] += 1
                    env.reset(seed=(self.seed, i, self._episode_counts[i]))
            self.global_step += n

        obs_list, pair_idx = [], np.zeros(n, dtype=np.int64)
        for i, env in enumerate(self.envs):
            req = env.state.current_request
            obs_list.append(self.encoder.encode(env.state, req))
            pair_idx[i] = self.table.pair_index(req.source, req.destination)
        node, edge, glob, _ = self._batch_tensors(obs_list, pair_idx)
        with torch.no_grad():
            buffer.bootstrap_value = (
                self.value_net(node, edge, glob).to(torch.float32).cpu().numpy()
            )
        return buffer, episode_accepted

    # -- learning ------------------------------------------------------------

    def update(self, buffer: TrajectoryBuffer, update_idx: int | None = None) -> dict:
        """One PPO update over a full buffer; returns mean diagnostics."""
        hp = self.hp
        step = self.update_count if update_idx is None else update_idx
        lr = lr_schedule(step, hp.num_updates, hp)
        for group in self.optimizer.param_groups:
            group["lr"] = lr

        buffer.finalize(hp)
        flat = {
            "node": torch.from_numpy(buffer.node.reshape(-1, *buffer.node.shape[2:])),
            "edge": torch.from_numpy(buffer.edge.reshape(-1, *buffer.edge.shape[2:])),
            "glob": torch.from_numpy(buffer.glob.reshape(-1, buffer.glob.shape[-1])),
            "pair_idx": torch.from_numpy(buffer.pair_idx.reshape(-1)),
            "mask": torch.from_numpy(buffer.mask.reshape(-1, buffer.mask.shape[-1])),
            "action": torch.from_numpy(buffer.action.reshape(-1)),
            "log_prob": torch.from_numpy(buffer.log_prob.reshape(-1)),
            "advantages": torch.from_numpy(buffer.advantages.reshape(-1)),
            "returns": torch.from_numpy(buffer.returns.reshape(-1)),
            "forced": torch.from_numpy(buffer.forced.reshape(-1)),
        }
        for key in ("node", "edge", "glob", "log_prob", "advantages", "returns"):
            flat[key] = flat[key].to(device=self.device, dtype=self.dtype)
        for key in ("pair_idx", "mask", "action", "forced"):
            flat[key] = flat[key].to(self.device)

        total = buffer.size
        mb_size = total // hp.num_minibatches
        params = list(self.policy.parameters()) + list(self.value_net.parameters())
        diag_acc: dict[str, float] = {}
        n_batches = 0
        for _ in range(hp.update_epochs):
            perm = torch.randperm(total, generator=self.sample_rng).to(self.device)
            for start in range(0, total - mb_size + 1, mb_size):
                idx = perm[start : start + mb_size]
                batch = {k: v[idx] for k, v in flat.items()}
                loss, diag = ppo_loss(self.policy, self.value_net, batch, hp)
                if not torch.isfinite(loss):
                    raise TrainingFault(f"non-finite loss at update {step}: {diag}")
                self.optimizer.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(params, hp.max_grad_norm)
                self.optimizer.step()
                for k, v in diag.items():
                    diag_acc[k] = diag_acc.get(k, 0.0) + v
                n_batches += 1
        self.update_count = step + 1
        out = {k: v / n_batches for k, v in diag_acc.items()}
        out["learning_rate"] = lr
        return out

    def train(
        self,
        total_timesteps: int | None = None,
        on_update: Optional[Callable[[dict], None]] = None,
    ) -> list[dict]:
        """Run rollout/update cycles until the step budget is exhausted.

        Returns one record per update with losses, the learning rate, and
        the accepted-services statistics of episodes finished in that
        rollout (the learning-curve signal).
        """
        budget = total_timesteps or self.hp.total_timesteps
        history = []
        while self.global_step < budget:
            buffer, episode_accepted = self.collect_rollout()
            diagnostics = self.update(buffer)
            record = {
                "update": self.update_count,
                "env_steps": self.global_step,
                **diagnostics,
                "episodes_finished": len(episode_accepted),
                "mean_accepted": float(np.mean(episode_accepted)) if episode_accepted else math.nan,
                "std_accepted": float(np.std(episode_accepted)) if episode_accepted else math.nan,
            }
            history.append(record)
            if on_update is not None:
                on_update(record)
        return history

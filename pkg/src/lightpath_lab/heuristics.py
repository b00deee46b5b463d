"""Deterministic KSP-FF and FF-KSP baselines over the masked action space.

"First fit" counts both free-spectrum cells and reusable lightpaths as fits:
under lightpath reuse, adding a service to an existing lightpath is a normal
allocation outcome, not a fallback. Both heuristics are pure functions of
the environment state and return ``None`` when no valid action exists (the
request is then blocked).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from lightpath_lab.environment import Action, RwaLrEnv


def ksp_ff(env: RwaLrEnv, mask: np.ndarray | None = None) -> Action | None:
    """First path in rank order with a valid channel, lowest such channel.

    Iterates candidate paths k = 0..K-1 and returns (k, s) for the first
    path whose mask row has any valid cell, with s the lowest valid channel
    on that row. Returns None iff the whole mask is false.
    """
    for rank in range(env.num_candidate_paths()):
        row = mask[rank] if mask is not None else env.path_row_valid(rank)
        if row.any():
            return Action(path_rank=rank, channel=int(np.argmax(row)))
    return None


def ff_ksp(env: RwaLrEnv, mask: np.ndarray | None = None) -> Action | None:
    """Lowest channel valid on any path, best-ranked path at that channel.

    Iterates channels s = 0..S-1 and returns (k, s) for the first channel
    valid on some candidate path, with k the lowest rank valid at s.
    Returns None iff the whole mask is false.
    """
    if mask is None:
        mask = env.action_mask()
    by_channel = mask.any(axis=0)
    if not by_channel.any():
        return None
    channel = int(np.argmax(by_channel))
    rank = int(np.argmax(mask[:, channel]))
    return Action(path_rank=rank, channel=channel)


class RandomValidPolicy:
    """Uniform choice over the currently valid action cells.

    The weakest masked baseline: it never picks an invalid action but
    otherwise ignores structure. Stateful only through its private RNG.
    """

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)

    policy_id = "random_valid"

    def act(self, env: RwaLrEnv, mask: np.ndarray | None = None) -> Action | None:
        if mask is None:
            mask = env.action_mask()
        flat = np.flatnonzero(mask.reshape(-1))
        if flat.size == 0:
            return None
        cell = int(flat[self._rng.integers(0, flat.size)])
        rank, channel = divmod(cell, mask.shape[1])
        return Action(path_rank=rank, channel=channel)


class HeuristicVariant(str, enum.Enum):
    KSP_FF = "ksp_ff"
    FF_KSP = "ff_ksp"


@dataclass(frozen=True)
class HeuristicPolicy:
    """Callable policy wrapper around one heuristic variant."""

    variant: HeuristicVariant

    @property
    def policy_id(self) -> str:
        return self.variant.value

    def act(self, env: RwaLrEnv, mask: np.ndarray | None = None) -> Action | None:
        if self.variant == HeuristicVariant.KSP_FF:
            return ksp_ff(env, mask)
        return ff_ksp(env, mask)

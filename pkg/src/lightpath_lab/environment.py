"""The RWA-LR state machine under incremental loading.

Non-expiring 100 Gbps service requests arrive one at a time between uniformly
drawn node pairs. An action picks a candidate path rank and a WDM channel;
it either establishes a new lightpath (free channel on every path link),
reuses an existing lightpath with spare capacity on exactly that path and
channel, or is invalid. Accepted requests earn +1 reward, blocked ones -1,
and services are never torn down, so occupancy only ever grows.

Capacity bookkeeping is done in integer service slots, fixed when the
lightpath is created as ``max_services(path capacity, request size)``; this
is exact for fixed-size requests and immune to floating-point accumulation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from lightpath_lab.physical_layer import TransmissionConfig, max_services
from lightpath_lab.topology import PathTable


class TerminationMode(str, enum.Enum):
    FIXED_LENGTH = "fixed_length"
    FIRST_BLOCKING = "first_blocking"


@dataclass(frozen=True)
class ServiceRequest:
    """A non-expiring demand between two distinct nodes (topology indices)."""

    source: int
    destination: int
    size_gbps: float = 100.0

    def __post_init__(self) -> None:
        if self.source == self.destination:
            raise ValueError("source and destination must differ")
        if self.size_gbps <= 0:
            raise ValueError("request size must be positive")


@dataclass(frozen=True)
class Action:
    """A candidate path rank and a WDM channel index."""

    path_rank: int
    channel: int


class ActionKind(enum.Enum):
    NEW_LIGHTPATH = "new"
    REUSE = "reuse"
    INVALID = "invalid"


class Classification(NamedTuple):
    kind: ActionKind
    lightpath_id: Optional[int]


class StepResult(NamedTuple):
    reward: int
    accepted: bool
    outcome: ActionKind
    lightpath_id: Optional[int]


@dataclass(frozen=True)
class EpisodeConfig:
    """Episode shape: request budget, termination mode, traffic seed.

    Evaluation episodes default to 10,000 requests; training episodes are
    shortened (2,000 by default elsewhere) through an episode scale factor.
    Traffic is drawn uniformly over unordered node pairs.
    """

    num_requests: int = 10_000
    termination: TerminationMode = TerminationMode.FIXED_LENGTH
    request_size_gbps: float = 100.0
    seed: int | tuple = 0

    def __post_init__(self) -> None:
        if self.num_requests < 1:
            raise ValueError("num_requests must be >= 1")


@dataclass
class LightpathRecord:
    """Registry view of one established lightpath."""

    lightpath_id: int
    pair_idx: int
    path_rank: int
    links: tuple[int, ...]
    channel: int
    remaining_slots: int
    initial_slots: int


@dataclass
class NetworkState:
    """Complete mutable environment state.

    ``occupancy[link, channel]`` holds the occupying lightpath id, 0 if free.
    Lightpath ids start at 1, increase monotonically and are never recycled
    within an episode. ``lp_signature`` maps an id to the global path-table
    signature of the path it was established on; index 0 is a -1 sentinel.
    """

    occupancy: np.ndarray
    lp_signature: np.ndarray
    lp_slots: np.ndarray
    lp_channel: np.ndarray
    lp_initial_slots: np.ndarray
    next_lightpath_id: int = 1
    requests_processed: int = 0
    accepted: int = 0
    blocked: int = 0
    first_block_step: Optional[int] = None
    rng: np.random.Generator = None
    current_request: Optional[ServiceRequest] = None


class RwaLrEnv:
    """One independently seeded RWA-LR episode instance.

    A single environment owns its :class:`NetworkState` exclusively; many
    environments may run concurrently as long as each has its own instance.
    The request stream is generated by a counter-based (Philox) generator, so
    a given seed replays the identical traffic sequence for any policy.
    """

    def __init__(
        self,
        path_table: PathTable,
        episode_config: EpisodeConfig,
        transmission: TransmissionConfig | None = None,
        record_trace: bool = False,
    ):
        self.table = path_table
        self.config = episode_config
        self.transmission = transmission or TransmissionConfig()
        self.num_channels = self.transmission.channel_count
        self.record_trace = record_trace
        self.trace: list[tuple] = []

        # Per (pair, rank) lookup arrays used by the hot path validity check.
        self._pair_paths: list[list[tuple[np.ndarray, int, int]]] = []
        for pidx, row in enumerate(path_table.paths):
            entries = []
            for rank, cand in enumerate(row):
                slots_cap = max_services(
                    cand.capacity_gbps, episode_config.request_size_gbps
                )
                sig = path_table.path_signature(pidx, rank)
                entries.append((cand.link_array, slots_cap, sig))
            self._pair_paths.append(entries)

        self.state: NetworkState | None = None
        self._current_pair_idx = -1

    # -- episode lifecycle -------------------------------------------------

    def reset(self, seed: int | tuple | None = None) -> ServiceRequest:
        """Fresh empty occupancy, zeroed counters, reseeded RNG.

        ``seed`` optionally replaces the configured seed (used to advance a
        parallel environment to its next episode deterministically).
        """
        if seed is not None:
            self.config = replace(self.config, seed=seed)
        n_links = self.table.topology.num_links
        cap = self.config.num_requests + 1
        seed = self.config.seed
        seq = np.random.SeedSequence(seed if isinstance(seed, int) else list(seed))
        self.state = NetworkState(
            occupancy=np.zeros((n_links, self.num_channels), dtype=np.int64),
            lp_signature=np.full(cap + 1, -1, dtype=np.int64),
            lp_slots=np.zeros(cap + 1, dtype=np.int64),
            lp_channel=np.full(cap + 1, -1, dtype=np.int64),
            lp_initial_slots=np.zeros(cap + 1, dtype=np.int64),
            rng=np.random.Generator(np.random.Philox(seq)),
        )
        self.trace = []
        self.state.current_request = self.sample_request()
        return self.state.current_request

    def sample_request(self) -> ServiceRequest:
        """Draw a uniform unordered node pair; advances the RNG stream."""
        pidx = int(self.state.rng.integers(0, self.table.num_pairs))
        u, v = self.table.pairs[pidx]
        self._current_pair_idx = pidx
        return ServiceRequest(
            source=u, destination=v, size_gbps=self.config.request_size_gbps
        )

    def is_terminated(self) -> bool:
        st = self.state
        if st.requests_processed >= self.config.num_requests:
            return True
        if self.config.termination == TerminationMode.FIRST_BLOCKING:
            return st.blocked >= 1
        return False

    # -- action semantics ----------------------------------------------------

    def classify_action(self, action: Action) -> Classification:
        """Reference classification of one (path rank, channel) cell.

        Kept deliberately scalar and literal; :meth:`action_mask` is the
        vectorized equivalent and is property-tested against this.
        """
        if not 0 <= action.path_rank < self.table.k:
            raise IndexError(f"path rank {action.path_rank} out of range")
        if not 0 <= action.channel < self.num_channels:
            raise IndexError(f"channel {action.channel} out of range")
        entries = self._pair_paths[self._current_pair_idx]
        if action.path_rank >= len(entries):
            return Classification(ActionKind.INVALID, None)
        links, slots_cap, sig = entries[action.path_rank]
        ids = self.state.occupancy[links, action.channel]
        if not ids.any():
            if slots_cap >= 1:
                return Classification(ActionKind.NEW_LIGHTPATH, None)
            return Classification(ActionKind.INVALID, None)
        first = int(ids[0])
        if first != 0 and (ids == first).all():
            if (
                self.state.lp_signature[first] == sig
                and self.state.lp_slots[first] >= 1
            ):
                return Classification(ActionKind.REUSE, first)
        return Classification(ActionKind.INVALID, None)

    def path_row_valid(self, rank: int) -> np.ndarray:
        """Validity of every channel for one candidate path of the current
        request (one mask row, vectorized). The full mask and the heuristics
        both consume this, so there is a single source of validity truth.
        """
        links, slots_cap, sig = self._pair_paths[self._current_pair_idx][rank]
        st = self.state
        sub = st.occupancy[links]
        first = sub[0]
        free_cols = ~sub.any(axis=0)
        same_id = (sub == first[None, :]).all(axis=0) & (first > 0)
        reuse_ok = same_id & (st.lp_signature[first] == sig) & (st.lp_slots[first] >= 1)
        if slots_cap >= 1:
            return free_cols | reuse_ok
        return reuse_ok

    def num_candidate_paths(self) -> int:
        """Candidate count for the current request's pair (may be below K)."""
        return len(self._pair_paths[self._current_pair_idx])

    def action_mask(self) -> np.ndarray:
        """Boolean K x S grid: cell true iff the action is not invalid."""
        mask = np.zeros((self.table.k, self.num_channels), dtype=bool)
        for rank in range(self.num_candidate_paths()):
            mask[rank] = self.path_row_valid(rank)
        return mask

    def apply_action(self, action: Optional[Action]) -> StepResult:
        """Apply an action for the current request and advance the episode.

        Invalid actions (and ``None``, for a request with no valid action)
        block the request: the grid is untouched and the reward is -1. Valid
        actions either stamp a new lightpath or consume one reuse slot. The
        next request is sampled unless the episode terminated.
        """
        st = self.state
        request = st.current_request
        if request is None:
            raise RuntimeError("episode already terminated; call reset()")
        step = st.requests_processed
        if action is None:
            cls = Classification(ActionKind.INVALID, None)
        else:
            cls = self.classify_action(action)

        lightpath_id = None
        if cls.kind == ActionKind.INVALID:
            st.blocked += 1
            if st.first_block_step is None:
                st.first_block_step = step
            reward, accepted = -1, False
        elif cls.kind == ActionKind.REUSE:
            lightpath_id = cls.lightpath_id
            st.lp_slots[lightpath_id] -= 1
            st.accepted += 1
            reward, accepted = 1, True
        else:
            links, slots_cap, sig = self._pair_paths[self._current_pair_idx][action.path_rank]
            lightpath_id = st.next_lightpath_id
            st.next_lightpath_id += 1
            st.occupancy[links, action.channel] = lightpath_id
            st.lp_signature[lightpath_id] = sig
            st.lp_slots[lightpath_id] = slots_cap - 1
            st.lp_initial_slots[lightpath_id] = slots_cap - 1
            st.lp_channel[lightpath_id] = action.channel
            st.accepted += 1
            reward, accepted = 1, True

        st.requests_processed += 1
        if self.record_trace:
            names = self.table.topology.nodes
            self.trace.append(
                (
                    step,
                    names[request.source],
                    names[request.destination],
                    action.path_rank if action is not None else -1,
                    action.channel if action is not None else -1,
                    cls.kind.value if accepted else "blocked",
                    lightpath_id if lightpath_id is not None else 0,
                )
            )
        st.current_request = None if self.is_terminated() else self.sample_request()
        return StepResult(reward, accepted, cls.kind, lightpath_id)

    # -- introspection -----------------------------------------------------

    def lightpaths(self) -> dict[int, LightpathRecord]:
        """Registry of all established lightpaths (for checks and export)."""
        st = self.state
        out = {}
        for lp_id in range(1, st.next_lightpath_id):
            sig = int(st.lp_signature[lp_id])
            pidx, rank = divmod(sig, self.table.k)
            links, _, _ = self._pair_paths[pidx][rank]
            out[lp_id] = LightpathRecord(
                lightpath_id=lp_id,
                pair_idx=pidx,
                path_rank=rank,
                links=tuple(int(l) for l in links),
                channel=int(st.lp_channel[lp_id]),
                remaining_slots=int(st.lp_slots[lp_id]),
                initial_slots=int(st.lp_initial_slots[lp_id]),
            )
        return out


TRACE_COLUMNS = ("step", "src", "dst", "action_k", "action_s", "outcome", "lightpath_id")


def write_trace_csv(env: RwaLrEnv, path) -> None:
    """Dump the recorded episode trace as CSV."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        writer.writerows(env.trace)

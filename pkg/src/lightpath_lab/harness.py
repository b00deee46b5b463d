"""Evaluation campaigns: episode runs, sweeps, paired comparisons, curves.

Episodes within a campaign are independent given their seeds, so they can
run concurrently; results are always reduced in seed order, which makes the
output independent of scheduling.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from joblib import Parallel, delayed

from lightpath_lab.environment import EpisodeConfig, RwaLrEnv, TerminationMode
from lightpath_lab.heuristics import HeuristicPolicy, HeuristicVariant
from lightpath_lab.physical_layer import TransmissionConfig
from lightpath_lab.topology import Ordering, PathTable, Topology, build_path_table

SEED_BASE_ENV_VAR = "LIGHTPATH_LAB_SEED_BASE"


def campaign_seed_base() -> int:
    """Campaign-level seed offset, configurable via environment variable."""
    return int(os.environ.get(SEED_BASE_ENV_VAR, "0"))


@dataclass(frozen=True)
class EpisodeResult:
    seed: int
    policy_id: str
    accepted: int
    blocked: int
    first_block_step: int | None
    request_size_gbps: float = 100.0

    @property
    def throughput_gbps(self) -> float:
        return self.accepted * self.request_size_gbps

    @property
    def requests_processed(self) -> int:
        return self.accepted + self.blocked


@dataclass(frozen=True)
class PairedResult:
    seed: int
    accepted_a: int
    accepted_b: int

    @property
    def delta(self) -> int:
        return self.accepted_a - self.accepted_b


def run_episode(
    policy,
    path_table: PathTable,
    episode_config: EpisodeConfig,
    transmission: TransmissionConfig | None = None,
    record_trace: bool = False,
) -> EpisodeResult:
    """Step one environment to termination under a policy.

    ``policy`` exposes ``act(env, mask) -> Action | None`` and ``policy_id``.
    Deterministic given (seed, policy). With ``record_trace`` the return
    value is a ``(result, trace_rows)`` pair instead.
    """
    env = RwaLrEnv(
        path_table, episode_config, transmission, record_trace=record_trace
    )
    env.reset()
    while not env.is_terminated():
        # Policies return None when no valid action exists; the environment
        # then blocks the request.
        env.apply_action(policy.act(env))
    st = env.state
    seed = episode_config.seed
    result = EpisodeResult(
        seed=seed if isinstance(seed, int) else seed[-1],
        policy_id=policy.policy_id,
        accepted=st.accepted,
        blocked=st.blocked,
        first_block_step=st.first_block_step,
        request_size_gbps=episode_config.request_size_gbps,
    )
    if record_trace:
        return result, env.trace
    return result


def _episode_job(policy, table, config, transmission):
    return run_episode(policy, table, config, transmission)


def run_many(
    policy,
    path_table: PathTable,
    episode_config: EpisodeConfig,
    seeds: Sequence[int],
    transmission: TransmissionConfig | None = None,
    n_jobs: int = -1,
) -> list[EpisodeResult]:
    """Run one episode per seed, in parallel, results ordered by seed."""
    base = campaign_seed_base()
    configs = [replace(episode_config, seed=base + s) for s in seeds]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_episode_job)(policy, path_table, cfg, transmission) for cfg in configs
    )
    return list(results)


SWEEP_COLUMNS = (
    "method",
    "ordering",
    "k",
    "episode_length",
    "termination",
    "seed",
    "accepted",
    "blocked",
    "first_block_step",
)


def sweep(
    topology: Topology,
    nsr_model,
    methods: Sequence[HeuristicVariant | str],
    k_values: Sequence[int],
    orderings: Sequence[Ordering | str],
    episode_lengths: Sequence[int],
    seeds: Sequence[int],
    termination: TerminationMode = TerminationMode.FIXED_LENGTH,
    transmission: TransmissionConfig | None = None,
    n_jobs: int = -1,
) -> list[dict]:
    """Cross-product heuristic evaluation; one row per (cell, seed).

    The path table is rebuilt for every (k, ordering) cell, then shared by
    all of that cell's episodes.
    """
    rows: list[dict] = []
    for ordering in orderings:
        ordering = Ordering(ordering)
        for k in k_values:
            table = build_path_table(topology, k, ordering, nsr_model, transmission)
            for length in episode_lengths:
                config = EpisodeConfig(
                    num_requests=length, termination=termination, seed=0
                )
                for method in methods:
                    policy = HeuristicPolicy(HeuristicVariant(method))
                    results = run_many(
                        policy, table, config, seeds, transmission, n_jobs=n_jobs
                    )
                    for result in results:
                        rows.append(
                            {
                                "method": policy.policy_id,
                                "ordering": ordering.value,
                                "k": k,
                                "episode_length": length,
                                "termination": termination.value,
                                "seed": result.seed,
                                "accepted": result.accepted,
                                "blocked": result.blocked,
                                "first_block_step": result.first_block_step,
                            }
                        )
    return rows


def summarize_sweep(rows: Iterable[dict]) -> list[dict]:
    """Mean/median/std of accepted services per sweep cell."""
    cells: dict[tuple, list[int]] = {}
    for row in rows:
        key = (row["method"], row["ordering"], row["k"], row["episode_length"], row["termination"])
        cells.setdefault(key, []).append(row["accepted"])
    out = []
    for key in sorted(cells):
        values = np.array(cells[key], dtype=float)
        out.append(
            {
                "method": key[0],
                "ordering": key[1],
                "k": key[2],
                "episode_length": key[3],
                "termination": key[4],
                "episodes": len(values),
                "mean_accepted": float(values.mean()),
                "median_accepted": float(np.median(values)),
                "std_accepted": float(values.std()),
            }
        )
    return out


def paired_eval(
    policy_a,
    policy_b,
    path_table: PathTable,
    episode_config: EpisodeConfig,
    seeds: Sequence[int],
    transmission: TransmissionConfig | None = None,
    n_jobs: int = -1,
) -> tuple[list[PairedResult], dict]:
    """Evaluate two policies on identical request sequences per seed.

    Seeding alone guarantees both runs replay the same traffic: requests are
    drawn from a counter-based stream indexed only by (seed, draw number).
    Returns per-seed results plus a summary with the mean delta and win
    counts (deltas are accepted_a - accepted_b).
    """
    res_a = run_many(policy_a, path_table, episode_config, seeds, transmission, n_jobs)
    res_b = run_many(policy_b, path_table, episode_config, seeds, transmission, n_jobs)
    paired = [
        PairedResult(seed=a.seed, accepted_a=a.accepted, accepted_b=b.accepted)
        for a, b in zip(res_a, res_b)
    ]
    deltas = np.array([p.delta for p in paired], dtype=float)
    summary = {
        "episodes": len(paired),
        "mean_delta": float(deltas.mean()),
        "wins_a": int((deltas > 0).sum()),
        "wins_b": int((deltas < 0).sum()),
        "ties": int((deltas == 0).sum()),
        "mean_delta_throughput_gbps": float(
            deltas.mean() * episode_config.request_size_gbps
        ),
    }
    return paired, summary


def stats(values: Sequence[float]) -> dict:
    """Descriptive statistics for boxplot rendering.

    Quartiles use linear interpolation; whiskers extend to the most extreme
    data points within 1.5x the interquartile range beyond the quartiles.
    """
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("stats requires a nonempty sample")
    q1, q2, q3 = np.percentile(arr, [25, 50, 75], method="linear")
    iqr = q3 - q1
    lo_candidates = arr[arr >= q1 - 1.5 * iqr]
    hi_candidates = arr[arr <= q3 + 1.5 * iqr]
    return {
        "n": int(arr.size),
        "mean": float(arr.mean()),
        "median": float(q2),
        "std": float(arr.std()),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(lo_candidates.min()),
        "whisker_high": float(hi_candidates.max()),
        "quartile_method": "linear",
    }


def training_curve(log_path: str | Path) -> dict:
    """Learning-curve series from a training run.

    ``log_path`` is an ``updates.csv`` file or the run directory holding
    one. Returns update indices, environment steps, and the per-update
    mean/std of accepted services across the episodes finished in each
    update window (updates where no episode ended are skipped).
    """
    log_path = Path(log_path)
    if log_path.is_dir():
        log_path = log_path / "updates.csv"
    rows = read_csv(log_path)
    if not rows:
        raise ValueError(f"training log {log_path} is empty")
    series = {"update": [], "env_steps": [], "mean_accepted": [], "std_accepted": []}
    for row in rows:
        mean = float(row["mean_accepted"])
        if math.isnan(mean):
            continue
        series["update"].append(int(row["update"]))
        series["env_steps"].append(int(row["env_steps"]))
        series["mean_accepted"].append(mean)
        series["std_accepted"].append(float(row["std_accepted"]))
    if not series["update"]:
        raise ValueError(f"training log {log_path} holds no finished episodes")
    return series


def plot_training_curve(
    log_path: str | Path,
    out_path: str | Path,
    baseline: float | None = None,
    baseline_label: str = "KSP-FF",
) -> None:
    """Render the learning curve with a std band and a heuristic baseline."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = training_curve(log_path)
    steps = np.array(series["env_steps"], dtype=float)
    mean = np.array(series["mean_accepted"])
    std = np.array(series["std_accepted"])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, mean, label="agent", color="tab:purple")
    ax.fill_between(steps, mean - std, mean + std, alpha=0.25, color="tab:purple")
    if baseline is not None:
        ax.axhline(baseline, color="tab:orange", linestyle="--", label=baseline_label)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("accepted services per episode")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_paired_bars(paired: Sequence[PairedResult], out_path: str | Path) -> None:
    """Per-seed delta bars: green where policy A accepted more, red where B did."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    deltas = [p.delta for p in paired]
    colors = ["tab:green" if d >= 0 else "tab:red" for d in deltas]
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.bar(range(len(deltas)), deltas, color=colors)
    ax.set_xlabel("episode")
    ax.set_ylabel("extra services accepted by A")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_boxplots(
    samples: dict[str, Sequence[float]], out_path: str | Path
) -> None:
    """Boxplots (1.5 IQR whiskers, mean marker) for accepted-services samples."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = list(samples)
    data = [list(samples[k]) for k in labels]
    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(labels), 4))
    ax.boxplot(data, whis=1.5, showmeans=True)
    ax.set_xticks(range(1, len(labels) + 1), labels)
    ax.set_ylabel("accepted services")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def write_csv(path: str | Path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> None:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

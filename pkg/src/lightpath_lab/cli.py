"""Command line interface: path tables, evaluations, sweeps, training.

Training flags deliberately mirror the reference command's spelling
(``--TOTAL_TIMESTEPS``, ``--GAE_LAMBDA``, ``--gnn_latent``, ...) so published
invocations can be pasted in with only the entry point renamed.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import click
import numpy as np

from lightpath_lab import harness
from lightpath_lab.environment import EpisodeConfig, TerminationMode
from lightpath_lab.heuristics import HeuristicPolicy, HeuristicVariant
from lightpath_lab.physical_layer import (
    ClosedFormGnNsr,
    TransmissionConfig,
    load_nsr_model,
)
from lightpath_lab.topology import Ordering, build_path_table, load_topology

DEFAULT_TOPOLOGY = Path(__file__).parent / "data" / "nsfnet_deeprmsa.json"
DEFAULT_NSR = Path(__file__).parent / "data" / "nsfnet_deeprmsa_gn.json"


def _load_inputs(topology_path, nsr_path):
    topo = load_topology(topology_path)
    nsr = load_nsr_model(nsr_path, topo)
    return topo, nsr


def _make_policy(name: str, table, transmission, request_size: float):
    if name in (v.value for v in HeuristicVariant):
        return HeuristicPolicy(HeuristicVariant(name))
    from lightpath_lab.agent.checkpoint import AgentPolicy

    return AgentPolicy.from_checkpoint(
        name, table, transmission, request_size_gbps=request_size
    )


@click.group()
def main() -> None:
    """Lightpath-lab: RWA with lightpath reuse on fixed-grid networks."""


@main.command()
@click.option("--topology", "topology_path", default=str(DEFAULT_TOPOLOGY), show_default=True)
@click.option("--nsr-file", "nsr_path", default=str(DEFAULT_NSR), show_default=True)
@click.option("--k", default=5, show_default=True)
@click.option("--ordering", type=click.Choice([o.value for o in Ordering]), default="hops")
@click.option("--out", "out_path", required=True, help="Output CSV path.")
def paths(topology_path, nsr_path, k, ordering, out_path):
    """Write the ranked candidate-path table as CSV."""
    topo, nsr = _load_inputs(topology_path, nsr_path)
    table = build_path_table(topo, k, Ordering(ordering), nsr)
    rows = []
    for pidx, (u, v) in enumerate(table.pairs):
        for rank, cand in enumerate(table.paths[pidx]):
            rows.append(
                {
                    "src": topo.nodes[u],
                    "dst": topo.nodes[v],
                    "rank": rank,
                    "hops": cand.hops,
                    "length_km": cand.length_km,
                    "capacity_gbps": round(cand.capacity_gbps, 6),
                    "node_sequence": "-".join(topo.nodes[i] for i in cand.node_seq),
                }
            )
    harness.write_csv(out_path, rows)
    click.echo(f"wrote {len(rows)} paths to {out_path}")


@main.command(name="eval")
@click.option("--topology", "topology_path", default=str(DEFAULT_TOPOLOGY), show_default=True)
@click.option("--nsr-file", "nsr_path", default=str(DEFAULT_NSR), show_default=True)
@click.option("--policy", "policy_name", default="ksp_ff", show_default=True,
              help="ksp_ff, ff_ksp, or a checkpoint path.")
@click.option("--k", default=5, show_default=True)
@click.option("--ordering", type=click.Choice([o.value for o in Ordering]), default="hops")
@click.option("--link_resources", "channels", default=100, show_default=True)
@click.option("--max_requests", default=10_000, show_default=True)
@click.option("--values_bw", "request_size", default=100.0, show_default=True)
@click.option("--first-blocking", is_flag=True, help="Terminate at the first blocked request.")
@click.option("--episodes", default=100, show_default=True, help="Number of seeded episodes.")
@click.option("--n-jobs", default=-1, show_default=True)
@click.option("--out", "out_path", required=True)
@click.option("--trace-out", "trace_path", default=None,
              help="Also dump the first episode's step-by-step trace CSV.")
def eval_cmd(topology_path, nsr_path, policy_name, k, ordering, channels, max_requests,
         request_size, first_blocking, episodes, n_jobs, out_path, trace_path):
    """Evaluate one policy over seeded episodes; per-episode accepted CSV."""
    topo, nsr = _load_inputs(topology_path, nsr_path)
    transmission = TransmissionConfig.for_channel_count(channels)
    table = build_path_table(topo, k, Ordering(ordering), nsr, transmission)
    policy = _make_policy(policy_name, table, transmission, request_size)
    config = EpisodeConfig(
        num_requests=max_requests,
        termination=TerminationMode.FIRST_BLOCKING if first_blocking else TerminationMode.FIXED_LENGTH,
        request_size_gbps=request_size,
    )
    if trace_path:
        import dataclasses

        from lightpath_lab.environment import RwaLrEnv, write_trace_csv

        env = RwaLrEnv(
            table,
            dataclasses.replace(config, seed=harness.campaign_seed_base()),
            transmission,
            record_trace=True,
        )
        env.reset()
        while not env.is_terminated():
            env.apply_action(policy.act(env))
        write_trace_csv(env, trace_path)
        click.echo(f"wrote episode trace to {trace_path}")
    results = harness.run_many(policy, table, config, range(episodes), transmission, n_jobs)
    harness.write_csv(
        out_path,
        [
            {
                "seed": r.seed,
                "policy": r.policy_id,
                "accepted": r.accepted,
                "blocked": r.blocked,
                "first_block_step": r.first_block_step,
                "throughput_gbps": r.throughput_gbps,
            }
            for r in results
        ],
    )
    accepted = np.array([r.accepted for r in results], dtype=float)
    click.echo(
        f"{policy.policy_id}: mean accepted {accepted.mean():.1f} "
        f"(std {accepted.std():.1f}) over {len(results)} episodes"
    )


@main.command()
@click.option("--topology", "topology_path", default=str(DEFAULT_TOPOLOGY), show_default=True)
@click.option("--nsr-file", "nsr_path", default=str(DEFAULT_NSR), show_default=True)
@click.option("--methods", default="ksp_ff,ff_ksp", show_default=True)
@click.option("--k-values", default="1,2,3,4,5,6,7,8,9,10", show_default=True)
@click.option("--orderings", default="hops", show_default=True)
@click.option("--episode-lengths", default="10000", show_default=True)
@click.option("--first-blocking", is_flag=True)
@click.option("--link_resources", "channels", default=100, show_default=True)
@click.option("--episodes", default=100, show_default=True)
@click.option("--n-jobs", default=-1, show_default=True)
@click.option("--out", "out_path", required=True, help="Per-episode sweep CSV.")
@click.option("--summary-out", "summary_path", default=None, help="Optional per-cell summary CSV.")
def bench(topology_path, nsr_path, methods, k_values, orderings, episode_lengths,
          first_blocking, channels, episodes, n_jobs, out_path, summary_path):
    """Cross-product heuristic sweep (the Table-I campaign)."""
    topo, nsr = _load_inputs(topology_path, nsr_path)
    transmission = TransmissionConfig.for_channel_count(channels)
    rows = harness.sweep(
        topo,
        nsr,
        methods=[m.strip() for m in methods.split(",")],
        k_values=[int(x) for x in k_values.split(",")],
        orderings=[o.strip() for o in orderings.split(",")],
        episode_lengths=[int(x) for x in episode_lengths.split(",")],
        seeds=range(episodes),
        termination=TerminationMode.FIRST_BLOCKING if first_blocking else TerminationMode.FIXED_LENGTH,
        transmission=transmission,
        n_jobs=n_jobs,
    )
    harness.write_csv(out_path, rows, harness.SWEEP_COLUMNS)
    click.echo(f"wrote {len(rows)} episode rows to {out_path}")
    if summary_path:
        summary = harness.summarize_sweep(rows)
        harness.write_csv(summary_path, summary)
        for cell in summary:
            click.echo(
                f"{cell['method']} {cell['ordering']} K={cell['k']} "
                f"len={cell['episode_length']}: mean {cell['mean_accepted']:.0f}"
            )


@main.command()
@click.option("--topology", "topology_path", default=str(DEFAULT_TOPOLOGY), show_default=True)
@click.option("--nsr-file", "nsr_path", default=str(DEFAULT_NSR), show_default=True)
@click.option("--policy-a", required=True)
@click.option("--policy-b", required=True)
@click.option("--k", default=5, show_default=True)
@click.option("--ordering", type=click.Choice([o.value for o in Ordering]), default="hops")
@click.option("--link_resources", "channels", default=100, show_default=True)
@click.option("--max_requests", default=10_000, show_default=True)
@click.option("--episodes", default=100, show_default=True)
@click.option("--n-jobs", default=-1, show_default=True)
@click.option("--out", "out_path", required=True)
@click.option("--plot", "plot_path", default=None, help="Optional per-seed delta bar plot (PNG).")
def pair(topology_path, nsr_path, policy_a, policy_b, k, ordering, channels,
         max_requests, episodes, n_jobs, out_path, plot_path):
    """Paired evaluation of two policies on identical request sequences."""
    topo, nsr = _load_inputs(topology_path, nsr_path)
    transmission = TransmissionConfig.for_channel_count(channels)
    table = build_path_table(topo, k, Ordering(ordering), nsr, transmission)
    pol_a = _make_policy(policy_a, table, transmission, 100.0)
    pol_b = _make_policy(policy_b, table, transmission, 100.0)
    config = EpisodeConfig(num_requests=max_requests)
    paired, summary = harness.paired_eval(
        pol_a, pol_b, table, config, range(episodes), transmission, n_jobs
    )
    harness.write_csv(
        out_path,
        [
            {"seed": p.seed, "accepted_a": p.accepted_a, "accepted_b": p.accepted_b, "delta": p.delta}
            for p in paired
        ],
    )
    click.echo(json.dumps(summary, indent=2))
    if plot_path:
        harness.plot_paired_bars(paired, plot_path)


@main.command()
@click.option("--log", "log_path", required=True, help="updates.csv from a training run.")
@click.option("--out", "out_path", required=True, help="Output PNG.")
@click.option("--baseline", type=float, default=None, help="Horizontal heuristic baseline.")
@click.option("--baseline-label", default="KSP-FF", show_default=True)
def curve(log_path, out_path, baseline, baseline_label):
    """Plot the training learning curve with its std band."""
    harness.plot_training_curve(log_path, out_path, baseline, baseline_label)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--topology", "topology_path", default=str(DEFAULT_TOPOLOGY), show_default=True)
@click.option("--gn-config", "gn_path", default=str(DEFAULT_NSR), show_default=True,
              help="Closed-form GN coefficient file.")
@click.option("--span-count-mode", default=None,
              type=click.Choice(["floor", "ceil", "round", "fractional"]),
              help="Override the span-count derivation mode.")
@click.option("--out", "out_path", required=True)
def calibrate(topology_path, gn_path, span_count_mode, out_path):
    """Freeze closed-form GN link NSRs into a table-driven calibration file."""
    topo = load_topology(topology_path)
    doc = json.loads(Path(gn_path).read_text())
    if span_count_mode is not None:
        doc["closed_form_gn"]["span_count_mode"] = span_count_mode
    model = load_nsr_model(doc, topo)
    if not isinstance(model, ClosedFormGnNsr):
        raise click.ClickException("--gn-config must define closed_form_gn")
    table = model.as_table()
    out = {
        "links": [
            {"a": l.a, "b": l.b, "nsr": table.link_nsr(i)}
            for i, l in enumerate(topo.links)
        ]
    }
    Path(out_path).write_text(json.dumps(out, indent=2))
    click.echo(f"wrote per-link NSR table to {out_path}")


@main.command()
@click.option("--topology", "topology_path", default=str(DEFAULT_TOPOLOGY), show_default=True)
@click.option("--nsr-file", "nsr_path", default=str(DEFAULT_NSR), show_default=True)
@click.option("--k", default=5, show_default=True)
@click.option("--ordering", type=click.Choice([o.value for o in Ordering]), default="hops")
@click.option("--link_resources", "channels", default=100, show_default=True)
@click.option("--max_requests", default=10_000, show_default=True,
              help="Evaluation episode length; training episodes scale by --scale_factor.")
@click.option("--values_bw", "request_size", default=100.0, show_default=True)
@click.option("--incremental_loading", is_flag=True, default=True,
              help="Accepted for command parity; incremental loading is the only traffic model.")
@click.option("--TOTAL_TIMESTEPS", "total_timesteps", default=200_000_000, show_default=True)
@click.option("--UPDATE_EPOCHS", "update_epochs", default=10, show_default=True)
@click.option("--ROLLOUT_LENGTH", "rollout_length", default=150, show_default=True)
@click.option("--NUM_ENVS", "num_envs", default=100, show_default=True)
@click.option("--GAMMA", "gamma", default=0.919, show_default=True)
@click.option("--GAE_LAMBDA", "gae_lambda", default=0.984, show_default=True)
@click.option("--LR", "lr", default=1.943e-05, show_default=True)
@click.option("--LR_SCHEDULE", "lr_sched", type=click.Choice(["warmup_cosine", "constant"]),
              default="warmup_cosine", show_default=True)
@click.option("--WARMUP_STEPS_FRACTION", "warmup_steps_fraction", default=0.1, show_default=True,
              help="Fraction of updates spent ramping to the peak LR.")
@click.option("--WARMUP_END_FRACTION", "warmup_end_fraction", default=0.1, show_default=True,
              help="Final LR as a fraction of the base LR.")
@click.option("--WARMUP_PEAK_MULTIPLIER", "warmup_peak_multiplier", default=2.0, show_default=True)
@click.option("--ACTION_MASKING/--no-ACTION_MASKING", "action_masking", default=True, show_default=True)
@click.option("--USE_GNN/--no-USE_GNN", "use_gnn", default=True, show_default=True)
@click.option("--scale_factor", default=0.2, show_default=True,
              help="Training episode length = scale_factor * max_requests.")
@click.option("--message_passing_steps", default=3, show_default=True)
@click.option("--gnn_latent", default=128, show_default=True)
@click.option("--gnn_mlp_layers", default=2, show_default=True)
@click.option("--clip-ratio", default=0.2, show_default=True)
@click.option("--entropy-coef", default=0.01, show_default=True)
@click.option("--value-coef", default=0.5, show_default=True)
@click.option("--num-minibatches", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--device", default="cpu", show_default=True)
@click.option("--checkpoint-every", default=0, show_default=True,
              help="Save an intermediate checkpoint every N updates (0 = final only).")
@click.option("--out-dir", "out_dir", required=True)
def train(topology_path, nsr_path, k, ordering, channels, max_requests, request_size,
          incremental_loading, total_timesteps, update_epochs, rollout_length, num_envs,
          gamma, gae_lambda, lr, lr_sched, warmup_steps_fraction, warmup_end_fraction,
          warmup_peak_multiplier, action_masking, use_gnn, scale_factor,
          message_passing_steps, gnn_latent, gnn_mlp_layers, clip_ratio, entropy_coef,
          value_coef, num_minibatches, seed, device, checkpoint_every, out_dir):
    """Train the masked PPO+GAT agent on parallel environments."""
    import csv

    from lightpath_lab.agent.checkpoint import save_checkpoint
    from lightpath_lab.agent.networks import GatConfig
    from lightpath_lab.agent.ppo import PpoHyperparams, PpoLearner

    if not use_gnn:
        raise click.ClickException("only the GAT agent is implemented; --USE_GNN is required")
    topo, nsr = _load_inputs(topology_path, nsr_path)
    transmission = TransmissionConfig.for_channel_count(channels)
    table = build_path_table(topo, k, Ordering(ordering), nsr, transmission)
    train_requests = max(int(round(scale_factor * max_requests)), 1)
    episode_config = EpisodeConfig(
        num_requests=train_requests, request_size_gbps=request_size
    )
    hp = PpoHyperparams(
        gamma=gamma,
        gae_lambda=gae_lambda,
        learning_rate=lr,
        update_epochs=update_epochs,
        rollout_length=rollout_length,
        num_envs=num_envs,
        total_timesteps=total_timesteps,
        clip_ratio=clip_ratio,
        value_coef=value_coef,
        entropy_coef=entropy_coef,
        num_minibatches=num_minibatches,
        warmup_fraction=warmup_steps_fraction if lr_sched == "warmup_cosine" else 0.0,
        warmup_peak_multiplier=warmup_peak_multiplier if lr_sched == "warmup_cosine" else 1.0,
        end_fraction=warmup_end_fraction if lr_sched == "warmup_cosine" else 1.0,
        action_masking=action_masking,
    )
    gat = GatConfig(
        latent_dim=gnn_latent,
        message_passing_rounds=message_passing_steps,
        mlp_layers=gnn_mlp_layers,
    )
    learner = PpoLearner(
        table, episode_config, hp, transmission, gat_config=gat, seed=seed, device=device
    )

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(
            {
                "topology": str(topology_path),
                "nsr_file": str(nsr_path),
                "k": k,
                "ordering": ordering,
                "channels": channels,
                "max_requests": max_requests,
                "train_requests": train_requests,
                "scale_factor": scale_factor,
                "hyperparams": hp.to_json(),
                "gat": gat.to_json(),
                "seed": seed,
            },
            indent=2,
        )
    )
    log_path = out / "updates.csv"
    fieldnames = [
        "update", "env_steps", "learning_rate", "policy_loss", "value_loss",
        "entropy", "clip_fraction", "approx_kl", "episodes_finished",
        "mean_accepted", "std_accepted",
    ]
    with open(log_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()

        def on_update(record: dict) -> None:
            writer.writerow({k: record.get(k) for k in fieldnames})
            fh.flush()
            if checkpoint_every and record["update"] % checkpoint_every == 0:
                save_checkpoint(out / f"checkpoint_{record['update']:06d}.pt", learner)
            mean = record["mean_accepted"]
            shown = f"{mean:.1f}" if not math.isnan(mean) else "-"
            click.echo(
                f"update {record['update']} steps {record['env_steps']} "
                f"lr {record['learning_rate']:.2e} accepted {shown}"
            )

        learner.train(on_update=on_update)
    save_checkpoint(out / "checkpoint.pt", learner)
    click.echo(f"saved final checkpoint to {out / 'checkpoint.pt'}")


if __name__ == "__main__":
    main()

"""Experiment execution: training runs, the evaluation protocol, sweeps,
aggregation, and dataset generation.

Run directory layout, per seed:

    <out_dir>/<name>/config.ini          verbatim experiment config
    <out_dir>/<name>/seed_<k>/eval.csv   step,seed,return,seconds
    <out_dir>/<name>/seed_<k>/checkpoint.npz
    <out_dir>/<name>/eval.csv            all seeds concatenated

Everything except the wall-clock seconds column is a pure function of
(config, seed). Parallelism across seeds/sweep points is process-based and
capped by the QEXP_THREADS environment variable.
"""

import csv
import os
import time
from dataclasses import dataclass, replace
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .agents import EnvInfo, make_agent
from .config import ExperimentConfig, SweepSpec, render_config
from .envs import make_env
from .nn import load_checkpoint, save_checkpoint
from .replay import Dataset, ReplayBuffer, generate_offline_dataset
from .samplers import Rng

EVAL_HEADER = ["step", "seed", "return", "seconds"]


@dataclass
class EvalRecord:
    step: int
    seed: int
    ret: float
    seconds: float

    def row(self):
        return [str(self.step), str(self.seed), repr(self.ret), repr(self.seconds)]


def worker_count(n_jobs: int) -> int:
    cap = os.environ.get("QEXP_THREADS", "")
    limit = int(cap) if cap.strip() else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def evaluate_policy(agent, env, episodes: int, rng: Rng) -> float:
    """Mean total reward over frozen-policy episodes."""
    total = 0.0
    for _ in range(episodes):
        state = env.reset(rng)
        obs = env.observe(state)
        ep = 0.0
        while True:
            action = agent.eval_act(obs, rng)
            state, res = env.step(state, action)
            ep += res.reward
            obs = res.next_state
            if res.terminated or res.truncated:
                break
        total += ep
    return total / episodes


def _write_eval_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVAL_HEADER)
        for rec in records:
            writer.writerow(rec.row())


def run_single(cfg: ExperimentConfig, seed: int, seed_dir) -> list:
    """One training run; returns its EvalRecords and writes eval.csv."""
    seed_dir = Path(seed_dir)
    seed_dir.mkdir(parents=True, exist_ok=True)
    env = make_env(cfg.env_name)
    env_info = EnvInfo.from_env(env)
    head_cfg = cfg.head_config(env_info)
    agent = make_agent(env_info, head_cfg, cfg.agent, seed, mode=cfg.mode)

    rng_env = Rng.from_triple(cfg.run_id, seed, "env")
    rng_agent = Rng.from_triple(cfg.run_id, seed, "agent")
    rng_eval = Rng.from_triple(cfg.run_id, seed, "eval")
    eval_env = make_env(cfg.env_name)

    records = []
    t0 = time.monotonic()

    if cfg.mode == "offline":
        data = Dataset.load(cfg.dataset_path)
        if agent.needs_behavior_log_prob and np.any(~np.isfinite(data.behavior_log_probs)):
            raise ValueError("dataset lacks behavior log-probs required by this algorithm")
        for step in range(1, cfg.steps + 1):
            agent.update(data, rng_agent)
            if step % cfg.eval_interval == 0:
                ret = evaluate_policy(agent, eval_env, cfg.eval_episodes, rng_eval)
                records.append(EvalRecord(step, seed, ret, time.monotonic() - t0))
    else:
        buffer = ReplayBuffer(cfg.agent.buffer_capacity, env_info.obs_dim, env_info.action_dim)
        state = env.reset(rng_env)
        obs = env.observe(state)
        for step in range(1, cfg.steps + 1):
            action = agent.act(obs, rng_agent)
            state, res = env.step(state, action)
            buffer.add(obs, action, res.reward, res.next_state, res.terminated)
            if res.terminated or res.truncated:
                state = env.reset(rng_env)
                obs = env.observe(state)
            else:
                obs = res.next_state
            if len(buffer) >= cfg.agent.batch_size:
                agent.update(buffer, rng_agent)
            if step % cfg.eval_interval == 0:
                ret = evaluate_policy(agent, eval_env, cfg.eval_episodes, rng_eval)
                records.append(EvalRecord(step, seed, ret, time.monotonic() - t0))

    _write_eval_csv(seed_dir / "eval.csv", records)
    save_checkpoint(
        seed_dir / "checkpoint.npz",
        agent.actor_params_for_checkpoint(),
        meta={"env": cfg.env_name, "algo": cfg.algo, "family": cfg.family,
              "seed": seed, "steps": cfg.steps,
              "policy_overrides": cfg.policy_overrides,
              "agent_hidden": list(cfg.agent.hidden),
              "normalize_obs": cfg.agent.normalize_obs},
    )
    return records


def _run_single_job(args):
    cfg, seed, seed_dir = args
    return seed, run_single(cfg, seed, seed_dir)


def run_train(cfg: ExperimentConfig, out_dir=None, name="run") -> Path:
    """Train every seed (in parallel workers) and write the run directory."""
    root = Path(out_dir if out_dir is not None else cfg.out_dir) / name
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.ini").write_text(render_config(cfg), encoding="utf8")

    jobs = [(cfg, seed, root / f"seed_{seed}") for seed in cfg.seeds]
    results = {}
    if len(jobs) > 1 and worker_count(len(jobs)) > 1:
        with get_context("fork").Pool(worker_count(len(jobs))) as pool:
            for seed, recs in pool.imap_unordered(_run_single_job, jobs):
                results[seed] = recs
    else:
        for job in jobs:
            seed, recs = _run_single_job(job)
            results[seed] = recs

    combined = [rec for seed in cfg.seeds for rec in results[seed]]
    _write_eval_csv(root / "eval.csv", combined)
    return root


def read_eval_csv(path):
    """Rows as (step, seed, return); the wall-clock column is dropped."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != EVAL_HEADER[:3]:
            raise ValueError(f"{path} is not an eval CSV")
        for row in reader:
            rows.append((int(row[0]), int(row[1]), float(row[2])))
    return rows


def auc_of_run(run_dir) -> float:
    """Mean return across every eval point and seed of a finished run."""
    rows = read_eval_csv(Path(run_dir) / "eval.csv")
    if not rows:
        raise ValueError(f"{run_dir} has no evaluation rows")
    return float(np.mean([r[2] for r in rows]))


def run_sweep(cfg: ExperimentConfig, out_dir=None, name="sweep") -> dict:
    """Grid sweep, AUC selection, and the best-config re-run.

    Sweep points use the sweep evaluation protocol and sweep seeds; the
    argmax point (ties broken by grid order) is re-run on the disjoint
    best-run seeds with the best protocol. Failures are isolated per point.
    """
    sweep: SweepSpec = cfg.sweep
    root = Path(out_dir if out_dir is not None else cfg.out_dir) / name
    root.mkdir(parents=True, exist_ok=True)

    report = []
    best_idx, best_auc = None, -np.inf
    for i, (lr, mult, temp) in enumerate(sweep.grid()):
        point_cfg = replace(
            cfg,
            seeds=tuple(sweep.sweep_seeds),
            eval_interval=10_000 if cfg.steps % 10_000 == 0 else cfg.eval_interval,
            eval_episodes=3,
            agent=replace(cfg.agent, critic_lr=lr, actor_lr_mult=mult, temperature=temp),
            source_text="",
        )
        point_name = f"point_{i:03d}_lr{lr:g}_mult{mult:g}_temp{temp:g}"
        try:
            run_dir = run_train(point_cfg, out_dir=root, name=point_name)
            auc = auc_of_run(run_dir)
            report.append({"index": i, "critic_lr": lr, "actor_lr_mult": mult,
                           "temperature": temp, "auc": auc, "error": ""})
            if auc > best_auc:
                best_auc, best_idx = auc, i
        except Exception as exc:  # per-point isolation
            report.append({"index": i, "critic_lr": lr, "actor_lr_mult": mult,
                           "temperature": temp, "auc": float("nan"), "error": str(exc)})

    with open(root / "report.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["index", "critic_lr", "actor_lr_mult",
                                                "temperature", "auc", "error"])
        writer.writeheader()
        writer.writerows(report)

    result = {"report": report, "best_index": best_idx}
    if best_idx is not None:
        lr, mult, temp = sweep.grid()[best_idx]
        best_cfg = replace(
            cfg,
            seeds=tuple(sweep.best_seeds),
            eval_interval=1000 if cfg.steps % 1000 == 0 else cfg.eval_interval,
            eval_episodes=1,
            agent=replace(cfg.agent, critic_lr=lr, actor_lr_mult=mult, temperature=temp),
            source_text="",
        )
        best_dir = run_train(best_cfg, out_dir=root, name="best")
        result["best_point"] = {"critic_lr": lr, "actor_lr_mult": mult, "temperature": temp}
        result["best_auc_sweep"] = best_auc
        result["best_dir"] = str(best_dir)
    return result


def aggregate(run_dirs, out_csv=None):
    """Per-step mean and standard error (sample std / sqrt(n)) across seeds."""
    rows = []
    for d in run_dirs:
        p = Path(d)
        rows.extend(read_eval_csv(p if p.suffix == ".csv" else p / "eval.csv"))
    if not rows:
        raise ValueError("nothing to aggregate")
    by_step = {}
    for step, _, ret in rows:
        by_step.setdefault(step, []).append(ret)
    out = []
    for step in sorted(by_step):
        vals = np.asarray(by_step[step])
        stderr = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        out.append({"step": step, "mean_return": float(np.mean(vals)),
                    "stderr": stderr, "n": vals.size})
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["step", "mean_return", "stderr", "n"])
            writer.writeheader()
            writer.writerows(out)
    return out


def moving_average(values, window=10):
    """Trailing moving average (window shrinks at the start)."""
    values = np.asarray(values, dtype=float)
    out = np.empty_like(values)
    for i in range(values.size):
        out[i] = values[max(0, i - window + 1):i + 1].mean()
    return out


def plot_data(run_dirs, out_csv, window=10):
    """Aggregated curve smoothed with a trailing moving average."""
    agg = aggregate(run_dirs)
    smooth = moving_average([r["mean_return"] for r in agg], window)
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "mean_return", "smoothed_return", "stderr", "n"])
        for row, s in zip(agg, smooth):
            writer.writerow([row["step"], repr(row["mean_return"]), repr(float(s)),
                             repr(row["stderr"]), row["n"]])
    return out_csv


# ---------------------------------------------------------------------------
# policies-from-checkpoints and dataset generation


def load_policy(checkpoint_path):
    """Rebuild a sampling policy closure from a run checkpoint."""
    from .heads import head_forward, log_prob, sample_action
    from .nn import mlp_forward

    named, meta = load_checkpoint(checkpoint_path)
    actor = named["actor"]
    env = make_env(meta["env"])
    env_info = EnvInfo.from_env(env)
    head_cfg = ExperimentConfig(
        env_name=meta["env"], algo="sac", family=meta["family"], mode="online",
        steps=1000, eval_interval=1000,
        policy_overrides=meta.get("policy_overrides", {}),
    ).head_config(env_info)
    normalize = meta.get("normalize_obs", True)

    def policy(obs, rng):
        s = np.asarray(obs, dtype=float)
        if normalize:
            s = (s - env_info.obs_center) / env_info.obs_halfwidth
        raw, _ = mlp_forward(actor, s[None, :])
        out = head_forward(head_cfg, raw)
        a = sample_action(head_cfg, out, rng)
        return a[0], float(log_prob(head_cfg, out, a)[0])

    return policy, env, meta


def gen_dataset_from_checkpoint(checkpoint_path, n_transitions, seed, out_path):
    policy, env, meta = load_policy(checkpoint_path)
    rng = Rng.from_triple(0, seed, "dataset")
    return generate_offline_dataset(env, policy, n_transitions, rng, out_path)

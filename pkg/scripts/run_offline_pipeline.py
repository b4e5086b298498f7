"""End-to-end synthetic offline pipeline:

1. train a behavior policy online for a while (mid-training checkpoint),
2. roll it out into a transition dataset with exact behavior log-probs,
3. train offline algorithms on the dataset and report their returns
   against the behavior policy's average episode return.

Example:
    python scripts/run_offline_pipeline.py --out runs/offline_demo \
        --behavior-steps 40000 --transitions 100000 --offline-steps 30000 \
        --algos tawac awac --seeds 0,1,2
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from qexp_rl.agents import AgentConfig
from qexp_rl.config import ExperimentConfig
from qexp_rl.replay import Dataset
from qexp_rl.runner import gen_dataset_from_checkpoint, read_eval_csv, run_train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--env", default="pendulum")
    ap.add_argument("--out", default="runs/offline_pipeline")
    ap.add_argument("--behavior-steps", type=int, default=40_000)
    ap.add_argument("--transitions", type=int, default=100_000)
    ap.add_argument("--offline-steps", type=int, default=30_000)
    ap.add_argument("--algos", nargs="+", default=["tawac", "awac"])
    ap.add_argument("--family", default="squashed_gaussian")
    ap.add_argument("--temperature", type=float, default=1.0)
    ap.add_argument("--seeds", default="0,1,2")
    args = ap.parse_args()

    out = Path(args.out)
    seeds = tuple(int(s) for s in args.seeds.split(","))

    behavior_cfg = ExperimentConfig(
        env_name=args.env, algo="tawac", family=args.family, mode="online",
        steps=args.behavior_steps, eval_interval=1000, eval_episodes=1, seeds=(0,),
        out_dir=str(out),
        agent=AgentConfig(algo="tawac", temperature=1.0, q_prime=0.0, critic_lr=1e-3),
    )
    behavior_dir = run_train(behavior_cfg, name="behavior")
    ckpt = behavior_dir / "seed_0" / "checkpoint.npz"
    print(f"behavior checkpoint: {ckpt}")

    ds_path = out / "behavior_dataset.qxpd"
    ds = gen_dataset_from_checkpoint(ckpt, args.transitions, seed=1, out_path=ds_path)
    behavior_return = float(np.mean(ds.episode_returns()))
    print(f"dataset: {len(ds)} transitions, behavior avg return {behavior_return:.1f}")

    for algo in args.algos:
        cfg = ExperimentConfig(
            env_name=args.env, algo=algo, family=args.family, mode="offline",
            dataset_path=str(ds_path),
            steps=args.offline_steps, eval_interval=1000, eval_episodes=1, seeds=seeds,
            out_dir=str(out),
            agent=AgentConfig(algo=algo, temperature=args.temperature, q_prime=0.0,
                              critic_lr=3e-4, hidden=(64, 64), batch_size=128,
                              polyak=0.005, adam_beta2=0.99),
        )
        root = run_train(cfg, name=f"offline_{algo}")
        finals = {}
        for seed in seeds:
            rows = read_eval_csv(root / f"seed_{seed}" / "eval.csv")
            finals[seed] = float(np.mean([r[2] for r in rows[-5:]]))
        print(f"{algo}: final returns by seed {finals} (behavior {behavior_return:.1f})")


if __name__ == "__main__":
    main()

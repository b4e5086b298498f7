"""Run one online policy-family comparison on a classic-control task.

Example:
    python scripts/run_online.py --env mountain_car_cost --agent tawac \
        --families student_t q_gaussian --q 0.0 --steps 300000 \
        --seeds 0,1,2 --out runs/mc_tawac
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qexp_rl.agents import AgentConfig
from qexp_rl.config import ExperimentConfig
from qexp_rl.runner import aggregate, run_train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--env", default="pendulum")
    ap.add_argument("--agent", default="tawac", choices=["sac", "greedyac", "tawac"])
    ap.add_argument("--families", nargs="+", default=["gaussian", "student_t"])
    ap.add_argument("--q", type=float, default=0.0, help="entropic index for q_gaussian")
    ap.add_argument("--q-prime", type=float, default=0.0, help="TAWAC weight index")
    ap.add_argument("--temperature", type=float, default=1.0)
    ap.add_argument("--critic-lr", type=float, default=1e-3)
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--out", default="runs/online")
    args = ap.parse_args()

    seeds = tuple(int(s) for s in args.seeds.split(","))
    for family in args.families:
        cfg = ExperimentConfig(
            env_name=args.env, algo=args.agent, family=family, mode="online",
            steps=args.steps, eval_interval=1000, eval_episodes=1, seeds=seeds,
            out_dir=args.out,
            agent=AgentConfig(algo=args.agent, temperature=args.temperature,
                              q_prime=args.q_prime, critic_lr=args.critic_lr),
            policy_overrides={"q": args.q} if family == "q_gaussian" else {},
        )
        root = run_train(cfg, name=f"{args.agent}_{family}")
        agg = aggregate([root], out_csv=root / "summary.csv")
        print(f"{family}: final mean return {agg[-1]['mean_return']:.1f} "
              f"+- {agg[-1]['stderr']:.1f} -> {root}")


if __name__ == "__main__":
    main()

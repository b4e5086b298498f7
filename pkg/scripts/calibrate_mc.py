"""Short calibration runs for the Mountain Car reproduction: which
algorithm + q-exp family combination reaches the goal most reliably."""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from multiprocessing import Pool

import numpy as np

from qexp_rl.agents import AgentConfig
from qexp_rl.config import ExperimentConfig
from qexp_rl.runner import read_eval_csv, run_single


def job(args):
    name, cfg, seed, out = args
    t0 = time.time()
    recs = run_single(cfg, seed, Path(out) / name / f"seed_{seed}")
    rets = [r.ret for r in recs]
    best = max(rets)
    tail = float(np.mean(rets[-10:]))
    return name, seed, best, tail, time.time() - t0


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "/tmp/calib_mc"
    steps = int(sys.argv[2]) if len(sys.argv) > 2 else 60_000
    seeds = [int(s) for s in (sys.argv[3].split(",") if len(sys.argv) > 3 else ["0", "1"])]

    combos = []
    for algo, fam, po, akw in [
        ("tawac", "student_t", {}, dict(temperature=1.0, q_prime=0.0)),
        ("tawac", "student_t", {}, dict(temperature=0.1, q_prime=0.0)),
        ("tawac", "q_gaussian", {"q": 0.0}, dict(temperature=1.0, q_prime=0.0)),
        ("greedyac", "student_t", {}, dict(temperature=1.0)),
        ("greedyac", "q_gaussian", {"q": 0.0}, dict(temperature=1.0)),
    ]:
        name = f"{algo}-{fam}{po.get('q', '')}-t{akw['temperature']}"
        cfg = ExperimentConfig(
            env_name="mountain_car_cost", algo=algo, family=fam, mode="online",
            steps=steps, eval_interval=1000, eval_episodes=1, seeds=tuple(seeds),
            agent=AgentConfig(algo=algo, critic_lr=1e-3, **akw),
            policy_overrides=po,
        )
        combos.append((name, cfg))

    jobs = [(name, cfg, seed, out) for name, cfg in combos for seed in seeds]
    with Pool(2) as pool:
        for name, seed, best, tail, dt in pool.imap_unordered(job, jobs):
            goal = "GOAL" if best > -1000 else "    "
            print(f"{name:38s} seed={seed} best={best:8.1f} tail10={tail:8.1f} {goal} ({dt:.0f}s)",
                  flush=True)


if __name__ == "__main__":
    main()

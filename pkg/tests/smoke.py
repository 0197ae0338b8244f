"""Training smoke run shared by the acceptance suite and manual runs.

    python3 tests/smoke.py OUT_DIR      # runs every configured seed
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

from natwalk import cli
from natwalk.agent.env import WalkEnv
from natwalk.agent.training import evaluate, load_policy
from natwalk.config import load_config

CONFIG = Path(__file__).with_name("acceptance_walk.toml")
MIN_SPEED = 0.5
EVAL_SEED = 12345


def alpha_respects_threshold(metrics_csv: Path, threshold: float) -> bool:
    """alpha may be nonzero only once r_mean has exceeded the threshold."""
    with open(metrics_csv, encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    crossed = False
    for r in rows:
        crossed = crossed or float(r["r_mean"]) > threshold
        if float(r["alpha"]) != 0.0 and not crossed:
            return False
    return True


def evaluate_checkpoints(run_dir: Path, env: WalkEnv) -> list[dict]:
    out = []
    for ckpt in sorted((run_dir / "checkpoints").glob("step_*")):
        learner = load_policy(ckpt)
        ep = evaluate(learner, env, 1, EVAL_SEED)[0]
        out.append({"checkpoint": ckpt.name, "mean_velocity": ep.mean_velocity,
                    "distance": ep.distance, "fell": ep.fell, "steps": ep.steps,
                    "effort": ep.effort})
    return out


def run(out_root, seeds=None, stop_on_success=True) -> dict:
    out_root = Path(out_root)
    cfg = load_config(CONFIG)
    seeds = list(seeds if seeds is not None else cfg.seeds)
    report = {"config": str(CONFIG), "seeds": {}, "success": False}
    env = WalkEnv()
    for seed in seeds:
        run_dir = out_root / f"seed_{seed}"
        code = cli.main(["train", "--config", str(CONFIG), "--seed", str(seed),
                         "--out", str(run_dir)])
        if code != 0:
            raise RuntimeError(f"training seed {seed} exited with {code}")
        evals = evaluate_checkpoints(run_dir, env)
        ok = [e for e in evals if e["mean_velocity"] >= MIN_SPEED and not e["fell"]]
        alpha_ok = alpha_respects_threshold(run_dir / "metrics.csv", cfg.training.adapt.threshold)
        report["seeds"][seed] = {"evaluations": evals, "walking_checkpoints": ok,
                                 "alpha_ok": alpha_ok}
        report["success"] = report["success"] or (bool(ok) and alpha_ok)
        (out_root / "report.json").write_text(json.dumps(report, indent=2))
        if report["success"] and stop_on_success:
            break
    return report


if __name__ == "__main__":
    print(json.dumps(run(sys.argv[1]), indent=2))

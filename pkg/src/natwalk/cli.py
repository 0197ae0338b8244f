"""``natwalk`` command line: train, eval, analyze, terrain-gen and ablate.

Every command writes plain CSV/JSON whose header carries the config hash and
seed. Failures exit nonzero with a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from natwalk import __version__, gaitlab, terrain
from natwalk.biomech import ModelError, load_model
from natwalk.config import ConfigError, RunConfig, load_config, provenance

log = logging.getLogger("natwalk")

ABLATIONS = ("no-adapt", "no-effort", "only-vel")
EXIT_USAGE = 2
EXIT_FAILURE = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(
        seed=getattr(args, "seed", None), mode=getattr(args, "mode", None),
        variant=getattr(args, "ablate", None), out=getattr(args, "out", None),
        terrain=getattr(args, "terrain", None), n_rollouts=getattr(args, "rollouts", None))


def _model(cfg: RunConfig):
    return load_model(cfg.model) if cfg.model else load_model()


def _env_factory(cfg: RunConfig):
    from natwalk.agent.env import WalkEnv

    model = _model(cfg)
    return lambda i, env_cfg: WalkEnv(model, config=env_cfg)


def _plain(obj):
    """Replace NaN floats by None so the output is strict JSON."""
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _emit(obj) -> None:
    print(json.dumps(_plain(obj), indent=2, sort_keys=True))


# --------------------------------------------------------------------------
# commands


def cmd_train(args) -> dict:
    from natwalk.agent.training import run_training

    cfg = _config(args)
    out = Path(cfg.out)
    results = []
    seeds = cfg.seeds
    for seed in seeds:
        run_cfg = cfg.with_overrides(seed=seed)
        run_out = out if len(seeds) == 1 else out / f"seed_{seed}"
        meta = provenance(run_cfg, u_max=run_cfg.training.env.clip)
        _write_run_json(run_out, run_cfg, meta)
        res = run_training(run_cfg.training, seed, run_out, _env_factory(run_cfg), meta,
                           resume_from=args.checkpoint)
        results.append({"seed": seed, "out": str(run_out), "steps": res.steps,
                        "episodes": res.episodes, "alpha": res.adapt_state.alpha,
                        "r_mean": res.adapt_state.r_mean})
    return {"command": "train", "config_hash": cfg.hash(), "runs": results}


def _eval_terrain(cfg: RunConfig, seed: int, k: int):
    e = cfg.evaluation
    if e.terrain == "flat":
        return terrain.flat()
    ss = np.random.SeedSequence([seed, k])
    return terrain.sloped_tiles(int(ss.generate_state(1)[0]), n_tiles=e.n_tiles,
                                tile_length=e.tile_length, max_slope=e.max_slope)


def cmd_eval(args) -> dict:
    from natwalk.agent.env import WalkEnv
    from natwalk.agent.training import evaluate_episode, load_policy

    if args.checkpoint is None:
        raise UsageError("eval needs --checkpoint")
    cfg = _config(args)
    learner = load_policy(args.checkpoint)
    model = _model(cfg)
    env_cfg = dataclasses.replace(cfg.training.env, u_max=learner.u_max)
    probe = WalkEnv(model, config=env_cfg)
    if (probe.observation_dim, probe.action_dim) != (learner.obs_dim, learner.act_dim):
        raise ValueError(
            f"checkpoint expects observation/action sizes {(learner.obs_dim, learner.act_dim)}, "
            f"model gives {(probe.observation_dim, probe.action_dim)}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.evaluation.n_rollouts
    reset_seeds = [int(s) for s in rng.integers(2**31, size=n)]
    meta = provenance(cfg, checkpoint=str(args.checkpoint), terrain=cfg.evaluation.terrain)
    episodes = []
    for k, rs in enumerate(reset_seeds):
        env = WalkEnv(model, _eval_terrain(cfg, cfg.seed, k), env_cfg)
        ep = evaluate_episode(learner, env, rs)
        row_meta = {**meta, "rollout": k, "reset_seed": rs, "dt": env_cfg.control_dt,
                    "body_weight": model.body_weight,
                    "legs": ep.rollout.legs, "terrain_slopes_deg": list(env.terrain.slopes_deg)}
        gaitlab.write_rollout_csv(out / f"rollout_{k:03d}.csv", ep.columns, ep.rows, row_meta)
        episodes.append({"rollout": k, "distance": ep.distance, "effort": ep.effort,
                         "mean_velocity": ep.mean_velocity, "fell": ep.fell, "steps": ep.steps})
    dist = np.array([e["distance"] for e in episodes])
    eff = np.array([e["effort"] for e in episodes])
    summary = {
        **meta,
        "n_rollouts": n,
        "distance_mean": float(dist.mean()), "distance_std": float(dist.std()),
        "effort_mean": float(eff.mean()), "effort_std": float(eff.std()),
        "falls": int(sum(e["fell"] for e in episodes)),
        "rollouts": episodes,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return {"command": "eval", "out": str(out), **{k: summary[k] for k in (
        "distance_mean", "distance_std", "effort_mean", "effort_std", "falls")}}


def cmd_analyze(args) -> dict:
    src = Path(args.rollouts_dir)
    files = sorted(src.glob("*.csv")) if src.is_dir() else [src]
    files = [f for f in files if f.name.startswith("rollout")] or files
    if not files:
        raise FileNotFoundError(f"no rollout CSV files in {src}")
    band = gaitlab.read_reference_band(args.reference) if args.reference else None
    rollouts = [gaitlab.read_rollout_csv(f) for f in files]
    out = Path(args.out or (src if src.is_dir() else src.parent) / "analysis")
    out.mkdir(parents=True, exist_ok=True)
    meta = {"seed": rollouts[0].meta.get("seed"),
            "config_hash": rollouts[0].meta.get("config_hash"),
            "reference": str(args.reference) if args.reference else None}

    per_rollout = []
    for f, r in zip(files, rollouts):
        rep, _ = gaitlab.analyze([r], band)
        per_rollout.append({"rollout": f.name, **rep.to_dict()})
    pooled, mean_traces = gaitlab.analyze(rollouts, band)
    report = {**meta, "pooled": pooled.to_dict(), "rollouts": per_rollout}
    (out / "match_report.json").write_text(json.dumps(_plain(report), indent=2, sort_keys=True))
    signals = sorted(band.mean) if band else list(gaitlab.SIGNALS)
    with open(out / "match_report.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# meta={json.dumps(meta, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rollout", "n_cycles", "avg_effort", "distance", "aggregate_match"]
                   + [f"match_{s}" for s in signals] + ["flags"])
        for name, rep in [(p["rollout"], p) for p in per_rollout] + [("pooled", pooled.to_dict())]:
            w.writerow([name, rep["n_cycles"], rep["avg_effort"], rep["distance"],
                        rep["aggregate_match"]]
                       + [rep["match"].get(s, float("nan")) for s in signals]
                       + [";".join(rep["flags"])])
    if mean_traces is not None:
        with open(out / "mean_traces.csv", "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# meta={json.dumps(meta, sort_keys=True)}\n")
            w = csv.writer(fh, lineterminator="\n")
            names = list(mean_traces)
            w.writerow(["percent"] + names)
            n = len(mean_traces[names[0]])
            for k, pct in enumerate(np.linspace(0.0, 100.0, n)):
                w.writerow([repr(float(pct))] + [repr(float(mean_traces[s][k])) for s in names])
    return {"command": "analyze", "out": str(out), "n_rollouts": len(rollouts),
            **{k: v for k, v in pooled.to_dict().items()}}


def cmd_terrain_gen(args) -> dict:
    cfg = _config(args)
    e = cfg.evaluation
    seed = cfg.seed
    if e.terrain == "flat":
        t = terrain.flat()
    else:
        t = terrain.sloped_tiles(seed, n_tiles=e.n_tiles, tile_length=e.tile_length,
                                 max_slope=e.max_slope)
    out = Path(cfg.out)
    path = out if out.suffix == ".csv" else out / f"terrain_{seed}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    terrain.to_csv(t, path, meta={"seed": seed, "config_hash": cfg.hash(),
                                  "slopes_deg": list(t.slopes_deg)})
    return {"command": "terrain-gen", "out": str(path), "n_knots": len(t.xs),
            "slopes_deg": list(t.slopes_deg)}


def cmd_ablate(args) -> dict:
    from natwalk.agent.training import run_training

    base = _config(args)
    out = Path(base.out)
    rows = []
    for variant in ("ours",) + ABLATIONS:
        cfg = base.with_overrides(variant=variant, out=str(out / variant))
        cfg.training.log_rewards = True
        meta = provenance(cfg, u_max=_variant_clip(cfg),
                          clip_disabled=_variant_clip(cfg) >= 1.0)
        _write_run_json(Path(cfg.out), cfg, meta)
        res = run_training(cfg.training, cfg.seed, cfg.out, _env_factory(cfg), meta)
        rows.append(_ablation_row(variant, Path(cfg.out), res, meta))
    with open(out / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# meta={json.dumps(provenance(base), sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        cols = list(rows[0])
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] for c in cols])
    return {"command": "ablate", "out": str(out), "variants": rows}


def _variant_clip(cfg: RunConfig) -> float:
    from natwalk.agent.training import apply_variant

    env_cfg, _ = apply_variant(cfg.training.env, cfg.training.variant)
    return env_cfg.clip


def _ablation_row(variant: str, run_dir: Path, res, meta: dict) -> dict:
    with open(run_dir / "metrics.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    tail = rows[-10:]

    def mean(col):
        vals = [float(r[col]) for r in tail if r[col] != ""]
        return float(np.mean(vals)) if vals else float("nan")

    return {"variant": variant, "episodes": res.episodes, "steps": res.steps,
            "mean_effort": mean("mean_effort"), "exp_match": mean("exp_match"),
            "task_return": mean("task_return"), "final_alpha": res.adapt_state.alpha,
            "u_max": meta["u_max"], "clip_disabled": int(meta["clip_disabled"])}


def _write_run_json(out: Path, cfg: RunConfig, meta: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = {**meta, "config": cfg.resolved()}
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str))


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="natwalk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"natwalk {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, seed=True, out=True):
        sp.add_argument("--config", type=Path, help="TOML run config")
        if seed:
            sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("train", help="train a policy")
    common(sp)
    sp.add_argument("--mode", choices=("walk", "run"))
    sp.add_argument("--ablate", choices=ABLATIONS)
    sp.add_argument("--checkpoint", help="resume from this checkpoint")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on flat or rough ground")
    common(sp)
    sp.add_argument("--checkpoint", required=False)
    sp.add_argument("--terrain", choices=("flat", "rough"))
    sp.add_argument("--mode", choices=("walk", "run"))
    sp.add_argument("--rollouts", type=int)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("analyze", help="gait-cycle analysis of rollout CSVs")
    sp.add_argument("rollouts_dir", help="directory of rollout CSVs, or a single file")
    sp.add_argument("--reference", type=Path, help="reference band CSV")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("terrain-gen", help="write a terrain profile as CSV")
    common(sp)
    sp.add_argument("--terrain", choices=("flat", "rough"), default="rough")
    sp.set_defaults(func=cmd_terrain_gen)

    sp = sub.add_parser("ablate", help="train the four reward variants with shared seeds")
    common(sp)
    sp.add_argument("--mode", choices=("walk", "run"))
    sp.set_defaults(func=cmd_ablate)
    return p


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    if args.command is None:
        return _fail("usage", "missing command", EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except (ConfigError, ModelError) as exc:
        return _fail("config", str(exc), EXIT_USAGE)
    except (OSError, ValueError, gaitlab.GaitError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_FAILURE)
    _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())

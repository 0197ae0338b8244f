"""Run configuration: one TOML document drives every command.

Example::

    seed = 0
    mode = "walk"              # or "run"
    out = "runs/walk-seed0"
    # model = "my_model.toml"  # default: bundled planar model

    [training]
    total_steps = 2000000
    variant = "ours"

    [reward]
    w1 = 0.097

    [adapt]
    threshold = 1000.0

    [learner]
    hidden_layers = 2
    hidden_size = 256

    [exploration_dep]          # reserved, accepted but not used
    kappa = 1200

Keys of the ``[exploration_dep]`` and ``[mpo]`` tables are accepted for
forward compatibility and reported in :attr:`RunConfig.flagged`; unknown keys
anywhere else are errors.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from natwalk.adapt import AdaptConfig
from natwalk.agent.env import EnvConfig
from natwalk.agent.td3 import LearnerConfig
from natwalk.agent.training import VARIANTS, TrainConfig
from natwalk.reward import RewardWeights

log = logging.getLogger(__name__)

RESERVED_TABLES = {
    "exploration_dep": ("kappa", "tau", "buffer_size", "bias_rate", "s4avg", "time_dist",
                        "p_switch", "h_dep", "test_episode", "force_scale"),
    "mpo": ("lr_dual", "n_step_return", "n_parallel", "n_sequential"),
}
TOP_KEYS = {"seed", "seeds", "mode", "model", "out"}
TRAINING_KEYS = {"total_steps", "n_envs", "checkpoint_every", "log_rewards", "variant",
                 "reference_band"}
ENV_KEYS = {"horizon", "control_dt", "n_substeps", "fall_fraction", "u_max", "collision_weight"}
EVAL_KEYS = {"n_rollouts", "terrain", "n_tiles", "tile_length", "max_slope"}
# learner keys spelled as in the hyperparameter tables
LEARNER_ALIASES = {"buffer_size": "replay_capacity", "lr_actor": "actor_lr",
                   "lr_critic": "critic_lr", "number_of_batches": "n_batches"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    n_rollouts: int = 20
    terrain: str = "flat"
    n_tiles: int = 10
    tile_length: float = 1.0
    max_slope: float = 5.0

    def __post_init__(self):
        if self.terrain not in ("flat", "rough"):
            raise ConfigError("eval terrain must be 'flat' or 'rough'")
        if self.n_rollouts < 1:
            raise ConfigError("n_rollouts must be positive")


@dataclass
class RunConfig:
    seed: int = 0
    seeds: tuple[int, ...] = (0,)
    mode: str = "walk"
    model: str | None = None
    out: str = "runs/default"
    training: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    flagged: dict[str, dict] = field(default_factory=dict)
    source: dict = field(default_factory=dict)
    base_dir: str | None = None

    def resolved(self) -> dict:
        """Plain-data view of every setting (the basis of the config hash)."""
        t = self.training
        return {
            "seed": self.seed, "seeds": list(self.seeds), "mode": self.mode,
            "model": self.model, "out": self.out,
            "training": {"total_steps": t.total_steps, "n_envs": t.n_envs,
                         "checkpoint_every": t.checkpoint_every, "log_rewards": t.log_rewards,
                         "variant": t.variant, "reference_band": t.reference_band},
            "env": {k: v for k, v in dataclasses.asdict(t.env).items() if k != "weights"},
            "reward": t.env.weights.to_dict(),
            "adapt": dataclasses.asdict(t.adapt),
            "learner": t.learner.to_dict(),
            "eval": dataclasses.asdict(self.evaluation),
            "flagged": self.flagged,
        }

    def hash(self) -> str:
        """Digest of the resolved settings; the output directory is excluded."""
        doc = self.resolved()
        doc.pop("out")
        return config_hash(doc)

    def with_overrides(self, **kw) -> "RunConfig":
        """Copy with CLI overrides (seed, mode, variant, out, terrain) applied."""
        doc = json.loads(json.dumps(self.source))
        for key in ("seed", "mode", "out", "model"):
            if kw.get(key) is not None:
                doc[key] = kw[key]
        if kw.get("seed") is not None:
            doc.pop("seeds", None)
        if kw.get("variant") is not None:
            doc.setdefault("training", {})["variant"] = kw["variant"]
        if kw.get("terrain") is not None:
            doc.setdefault("eval", {})["terrain"] = kw["terrain"]
        if kw.get("n_rollouts") is not None:
            doc.setdefault("eval", {})["n_rollouts"] = kw["n_rollouts"]
        return from_dict(doc, base_dir=self.base_dir)


def config_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _check(table: str, doc: dict, allowed) -> None:
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{table}]: {sorted(unknown)}")


def _learner(doc: dict) -> LearnerConfig:
    doc = {LEARNER_ALIASES.get(k, k): v for k, v in doc.items()}
    layers = doc.pop("hidden_layers", None)
    size = doc.pop("hidden_size", None)
    if layers is not None or size is not None:
        if "hidden_sizes" in doc:
            raise ConfigError("give either hidden_sizes or hidden_layers/hidden_size")
        doc["hidden_sizes"] = (int(size or 256),) * int(layers or 2)
    _check("learner", doc, {f.name for f in dataclasses.fields(LearnerConfig)})
    for k in ("batch_size", "steps_before_batches", "steps_between_batches", "n_batches",
              "replay_capacity", "policy_delay"):
        if k in doc:
            doc[k] = int(doc[k])
    try:
        return LearnerConfig(**doc)
    except ValueError as exc:
        raise ConfigError(f"[learner]: {exc}") from exc


def from_dict(doc: dict, base_dir=None) -> RunConfig:
    doc = json.loads(json.dumps(doc))  # deep copy of plain data
    source = json.loads(json.dumps(doc))
    base = Path(base_dir) if base_dir else Path.cwd()
    tables = {"training", "env", "reward", "adapt", "learner", "eval"} | set(RESERVED_TABLES)
    _check("top level", doc, TOP_KEYS | tables)

    flagged = {}
    for name, known in RESERVED_TABLES.items():
        sub = doc.pop(name, {})
        _check(name, sub, known)
        if sub:
            flagged[name] = sub
            log.warning("config keys in [%s] are accepted but have no effect: %s",
                        name, sorted(sub))

    mode = doc.get("mode", "walk")
    if mode not in ("walk", "run"):
        raise ConfigError(f"mode must be 'walk' or 'run', got {mode!r}")

    reward = doc.get("reward", {})
    _check("reward", reward, {f.name for f in dataclasses.fields(RewardWeights)})
    adapt_doc = doc.get("adapt", {})
    _check("adapt", adapt_doc, {f.name for f in dataclasses.fields(AdaptConfig)})
    env_doc = doc.get("env", {})
    _check("env", env_doc, ENV_KEYS)
    training = doc.get("training", {})
    _check("training", training, TRAINING_KEYS)
    eval_doc = doc.get("eval", {})
    _check("eval", eval_doc, EVAL_KEYS)

    try:
        weights = RewardWeights(**reward)
        env = EnvConfig(mode=mode, weights=weights, **env_doc)
        adapt_cfg = AdaptConfig(**{k: float(v) for k, v in adapt_doc.items()})
        learner = _learner(doc.get("learner", {}))
        band = training.get("reference_band")
        if band is not None:
            band = str(_existing(base / band, "reference band"))
        variant = training.get("variant", "ours")
        if variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")
        train_cfg = TrainConfig(
            total_steps=int(training.get("total_steps", TrainConfig.total_steps)),
            n_envs=int(training.get("n_envs", 1)),
            checkpoint_every=int(training.get("checkpoint_every", TrainConfig.checkpoint_every)),
            log_rewards=bool(training.get("log_rewards", False)),
            variant=variant, env=env, learner=learner, adapt=adapt_cfg, reference_band=band)
        evaluation = EvalConfig(**eval_doc)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    model = doc.get("model")
    if model is not None:
        model = str(_existing(base / model, "model file"))
    seed = int(doc.get("seed", 0))
    seeds = tuple(int(s) for s in doc.get("seeds", [seed]))
    return RunConfig(seed=seed, seeds=seeds, mode=mode, model=model,
                     out=str(doc.get("out", "runs/default")), training=train_cfg,
                     evaluation=evaluation, flagged=flagged, source=source,
                     base_dir=str(base))


def _existing(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def load_config(path=None) -> RunConfig:
    """Parse a TOML run config; ``None`` gives the defaults."""
    if path is None:
        return from_dict({})
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(doc, base_dir=path.parent)


def provenance(cfg: RunConfig, **extra: Any) -> dict:
    """Header fields written into every emitted file."""
    return {"config_hash": cfg.hash(), "seed": cfg.seed, "mode": cfg.mode,
            "variant": cfg.training.variant, **extra}

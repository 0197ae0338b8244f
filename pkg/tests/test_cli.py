import csv
import json
import math

import numpy as np
import pytest

from natwalk import cli, gaitlab

TINY = """
seed = 0
[training]
total_steps = {steps}
checkpoint_every = {ckpt}
[learner]
hidden_sizes = [16, 16]
batch_size = 16
steps_before_batches = 100
steps_between_batches = 100
number_of_batches = 2
buffer_size = 5000
[env]
horizon = 60
"""


def write_config(tmp_path, steps=200, ckpt=100):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY.format(steps=steps, ckpt=ckpt))
    return path


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else None), (json.loads(err) if err else None)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def header_meta(path):
    first = open(path).readline()
    assert first.startswith("#")
    return json.loads(first.split("=", 1)[1] if first.startswith("# meta=") else first[2:])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("train")
    cfg = write_config(tmp)
    assert cli.main(["train", "--config", str(cfg), "--out", str(tmp / "run")]) == 0
    return tmp, cfg


class TestErrors:
    def test_no_command(self, capsys):
        code, _, err = run(capsys)
        assert code == 2 and err["error"] == "usage"

    def test_bad_flag(self, capsys):
        code, _, err = run(capsys, "train", "--terrain", "moon")
        assert code == 2 and err["error"] == "usage"

    def test_bad_config(self, capsys, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("[reward]\nw7 = 1\n")
        code, _, err = run(capsys, "train", "--config", p)
        assert code == 2 and err["error"] == "config" and "w7" in err["message"]

    def test_eval_needs_checkpoint(self, capsys):
        code, _, err = run(capsys, "eval")
        assert code == 2 and err["error"] == "usage"

    def test_missing_checkpoint(self, capsys, tmp_path):
        code, _, err = run(capsys, "eval", "--checkpoint", tmp_path / "none")
        assert code == 1 and err["error"] == "FileNotFoundError"

    def test_checkpoint_model_mismatch(self, capsys, monkeypatch, trained):
        import dataclasses

        from natwalk import biomech

        model = biomech.load_model()
        smaller = dataclasses.replace(model, muscles=model.muscles[:-2])
        monkeypatch.setattr(cli, "_model", lambda cfg: smaller)
        code, _, err = run(capsys, "eval", "--checkpoint", trained[0] / "run")
        assert code == 1 and err["error"] == "ValueError"
        assert "sizes" in err["message"]


class TestTrain:
    def test_outputs(self, trained):
        tmp, _ = trained
        run_dir = tmp / "run"
        rows = read_rows(run_dir / "metrics.csv")
        assert rows
        meta = header_meta(run_dir / "metrics.csv")
        assert meta["seed"] == 0 and len(meta["config_hash"]) == 16
        cfg = json.loads((run_dir / "config.json").read_text())
        assert cfg["config_hash"] == meta["config_hash"]
        assert (run_dir / "checkpoints" / "LATEST").read_text() == "step_000000200"

    def test_multi_seed_and_ablation(self, capsys, tmp_path):
        cfg = write_config(tmp_path, steps=80, ckpt=80)
        text = cfg.read_text().replace("seed = 0", "seeds = [1, 2]")
        cfg.write_text(text)
        code, out, _ = run(capsys, "train", "--config", cfg, "--out", tmp_path / "o",
                           "--ablate", "no-adapt")
        assert code == 0
        assert [r["seed"] for r in out["runs"]] == [1, 2]
        for s in (1, 2):
            meta = header_meta(tmp_path / "o" / f"seed_{s}" / "metrics.csv")
            assert meta["variant"] == "no-adapt" and meta["seed"] == s

    def test_resume(self, capsys, tmp_path):
        cfg = write_config(tmp_path, steps=200, ckpt=100)
        assert run(capsys, "train", "--config", cfg, "--out", tmp_path / "full")[0] == 0
        part = write_config(tmp_path, steps=100, ckpt=100)
        part_cfg = tmp_path / "part.toml"
        part_cfg.write_text(part.read_text())
        assert run(capsys, "train", "--config", part_cfg, "--out", tmp_path / "p")[0] == 0
        full_cfg = write_config(tmp_path, steps=200, ckpt=100)
        code, _, _ = run(capsys, "train", "--config", full_cfg, "--out", tmp_path / "p",
                         "--checkpoint", tmp_path / "p")
        assert code == 0
        assert ((tmp_path / "full" / "metrics.csv").read_text().splitlines()[1:]
                == (tmp_path / "p" / "metrics.csv").read_text().splitlines()[1:])


class TestEval:
    def test_flat(self, capsys, trained, tmp_path):
        tmp, cfg = trained
        code, out, _ = run(capsys, "eval", "--config", cfg, "--checkpoint", tmp / "run",
                           "--rollouts", 3, "--out", tmp_path / "e")
        assert code == 0
        files = sorted((tmp_path / "e").glob("rollout_*.csv"))
        assert len(files) == 3
        summary = json.loads((tmp_path / "e" / "summary.json").read_text())
        assert summary["n_rollouts"] == 3 and summary["terrain"] == "flat"
        r = gaitlab.read_rollout_csv(files[0])
        u = [c for c in open(files[0]).read().splitlines()[1].split(",") if c.startswith("u_")]
        assert len(u) == 18
        assert r.meta["config_hash"] == summary["config_hash"]

    def test_deterministic_rough(self, capsys, trained, tmp_path):
        tmp, cfg = trained
        outs = []
        for name in ("a", "b"):
            code, _, _ = run(capsys, "eval", "--config", cfg, "--checkpoint", tmp / "run",
                             "--rollouts", 2, "--terrain", "rough", "--seed", 11,
                             "--out", tmp_path / name)
            assert code == 0
            outs.append((tmp_path / name / "summary.json").read_text())
        assert outs[0] == outs[1]
        meta = header_meta(tmp_path / "a" / "rollout_000.csv")
        assert len(meta["terrain_slopes_deg"]) == 10
        assert all(abs(s) <= 5.0 for s in meta["terrain_slopes_deg"])

    def test_default_rollout_count(self):
        assert cli.load_config().evaluation.n_rollouts == 20


def synthetic_rollout_dir(tmp_path, n=2, duration=6.0, offset=0.0):
    """Rollout CSVs whose right/left legs follow a known periodic pattern."""
    from natwalk import biomech

    model = biomech.load_model()
    dt = 0.01
    t = np.arange(int(duration / dt)) * dt
    cols = gaitlab.rollout_columns(model.dof_names, [m.name for m in model.muscles], model.feet)
    legs = {leg.name: {"hip": leg.hip, "knee": leg.knee, "ankle": leg.ankle, "foot": leg.foot}
            for leg in model.legs}
    tmp_path.mkdir(parents=True, exist_ok=True)
    for k in range(n):
        data = {c: np.zeros_like(t) for c in cols}
        data["t"] = t
        for j, leg in enumerate(model.legs):
            shift = 0.55 * j
            phase = 2 * np.pi * (t - shift) / 1.1
            data[f"q_{leg.hip}"] = 0.3 * np.sin(phase) + offset * k
            data[f"q_{leg.knee}"] = -0.4 * (1 - np.cos(phase))
            data[f"q_{leg.ankle}"] = 0.1 * np.sin(2 * phase)
            frac = ((t - shift) / 1.1) % 1.0
            data[f"grf_{leg.foot}"] = np.where(frac < 0.6, model.body_weight, 0.0)
        data["com_x"] = 1.2 * t
        data["com_vx"] = np.full_like(t, 1.2)
        rows = np.column_stack([data[c] for c in cols])
        gaitlab.write_rollout_csv(tmp_path / f"rollout_{k:03d}.csv", cols, rows,
                                  {"legs": legs, "body_weight": model.body_weight, "dt": dt,
                                   "seed": 0, "config_hash": "synthetic"})
    return tmp_path


class TestAnalyze:
    def test_reference_round_trip(self, capsys, tmp_path):
        src = synthetic_rollout_dir(tmp_path / "r")
        _, mean = gaitlab.analyze([gaitlab.read_rollout_csv(f)
                                   for f in sorted(src.glob("rollout_*.csv"))])
        band = gaitlab.ReferenceBand(mean, {k: np.full(100, 1e-6) for k in mean})
        gaitlab.write_reference_band(band, tmp_path / "band.csv")
        code, out, _ = run(capsys, "analyze", src, "--reference", tmp_path / "band.csv")
        assert code == 0
        assert out["match"] == {k: 1.0 for k in gaitlab.SIGNALS}
        report = json.loads((src / "analysis" / "match_report.json").read_text())
        assert report["pooled"]["aggregate_match"] == 1.0
        assert len(report["rollouts"]) == 2
        traces = read_rows(src / "analysis" / "mean_traces.csv")
        assert len(traces) == 100
        assert float(traces[-1]["percent"]) == 100.0
        rows = read_rows(src / "analysis" / "match_report.csv")
        assert [r["rollout"] for r in rows][-1] == "pooled"

    def test_no_cycles(self, capsys, tmp_path):
        src = synthetic_rollout_dir(tmp_path / "r", n=1, duration=0.5)
        code, out, _ = run(capsys, "analyze", src)
        assert code == 0
        assert out["flags"] == ["no cycles"] and out["n_cycles"] == 0

    def test_pooling_by_cycle(self, capsys, tmp_path):
        a = synthetic_rollout_dir(tmp_path / "a", n=1, duration=8.0)
        b = synthetic_rollout_dir(tmp_path / "b", n=1, duration=4.0)
        (b / "rollout_000.csv").rename(a / "rollout_001.csv")
        # give the second rollout a distinct hip offset to see the weighting
        text = (a / "rollout_001.csv").read_text().splitlines()
        header = text[1].split(",")
        hip = header.index("q_hip_r")
        body = []
        for line in text[2:]:
            v = line.split(",")
            v[hip] = repr(float(v[hip]) + 0.2)
            body.append(",".join(v))
        (a / "rollout_001.csv").write_text("\n".join(text[:2] + body) + "\n")
        code, out, _ = run(capsys, "analyze", a, "--out", tmp_path / "an")
        assert code == 0
        r1, r2 = (gaitlab.read_rollout_csv(a / f"rollout_00{k}.csv") for k in (0, 1))
        c1, c2 = gaitlab.rollout_cycles(r1), gaitlab.rollout_cycles(r2)
        hand = np.mean([c.traces["hip"] for c in c1 + c2], axis=0)
        traces = read_rows(tmp_path / "an" / "mean_traces.csv")
        got = np.array([float(r["hip"]) for r in traces])
        np.testing.assert_allclose(got, hand, rtol=1e-12)
        # cycle weighting differs from averaging the two per-rollout means
        per_rollout = 0.5 * (gaitlab.average_cycles(c1)["hip"] + gaitlab.average_cycles(c2)["hip"])
        assert np.max(np.abs(got - per_rollout)) > 1e-3
        assert out["n_cycles"] == len(c1) + len(c2)

    def test_missing_signal(self, capsys, tmp_path):
        path = tmp_path / "rollout_000.csv"
        gaitlab.write_rollout_csv(path, ["t", "com_x", "com_vx"], [[0.0, 0.0, 0.0]],
                                  {"legs": {"r": {"hip": "hip_r", "knee": "knee_r",
                                                  "ankle": "ankle_r", "foot": "right"}},
                                   "body_weight": 700.0})
        code, _, err = run(capsys, "analyze", tmp_path)
        assert code == 1 and err["error"] == "GaitError"


class TestTerrainGen:
    def test_rough(self, capsys, tmp_path):
        code, out, _ = run(capsys, "terrain-gen", "--seed", 3, "--out", tmp_path)
        assert code == 0
        path = tmp_path / "terrain_3.csv"
        assert out["out"] == str(path)
        assert len(out["slopes_deg"]) == 10
        meta = header_meta_line(path)
        assert meta["seed"] == 3 and "config_hash" in meta

    def test_deterministic(self, capsys, tmp_path):
        run(capsys, "terrain-gen", "--seed", 5, "--out", tmp_path / "a")
        run(capsys, "terrain-gen", "--seed", 5, "--out", tmp_path / "b")
        assert ((tmp_path / "a" / "terrain_5.csv").read_text()
                == (tmp_path / "b" / "terrain_5.csv").read_text())

    def test_flat(self, capsys, tmp_path):
        code, out, _ = run(capsys, "terrain-gen", "--terrain", "flat", "--out", tmp_path / "f.csv")
        assert code == 0 and out["slopes_deg"] == []


def header_meta_line(path):
    for line in open(path):
        if line.startswith("# meta="):
            return json.loads(line[len("# meta="):])
    raise AssertionError("no meta header")


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert "natwalk" in capsys.readouterr().out


def test_nan_is_emitted_as_null():
    assert cli._plain({"a": [math.nan, 1.0]}) == {"a": [None, 1.0]}

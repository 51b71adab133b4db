import argparse

import numpy as np
import pytest

from gwcl.cli import build_parser, main
from gwcl.commands.common import load_experiment, load_train_config
from gwcl.errors import ConfigError
from gwcl.services import raw_store
from gwcl.services.metrics import read_report
from presets.loader import available_presets, load_preset

QUIET = ["--log-level", "WARNING"]
QUICK_CONF = "quota=5\nfallback=3\nhidden=16\nk=5\nmain_batch=64\neta1=0.005\neta2=0.005\n"


def _namespace(**values):
    defaults = {"config": None, "preset": None, "seed": None, "skip_stage1": False, "skip_stage2": False,
                "no_gwcl": False, "no_ce": False, "no_spatial": False, "similarity": None, "knn_backend": None,
                "threads": None, "workers": None, "pretrain_epochs": None, "main_epochs": None,
                "checkpoint_every": None, "cube": None, "labels": None, "reps": None, "out": None}
    defaults.update(values)
    return argparse.Namespace(**defaults)


def test_every_subcommand_is_registered():
    parser = build_parser()
    for command in ("ingest", "reduce", "build-graph", "train", "evaluate", "render-map",
                    "run-experiment", "ablation"):
        with pytest.raises(SystemExit) as exit_info:
            parser.parse_args([command, "--help"])
        assert exit_info.value.code == 0


def test_ingest_reports_split_sizes(scene_files, capsys, tmp_path):
    cube, labels = scene_files
    code = main(QUIET + ["ingest", "--cube", str(cube), "--labels", str(labels), "--quota", "5",
                         "--seed", "3", "--split-out", str(tmp_path / "split.txt")])
    out = capsys.readouterr().out
    assert code == 0
    assert "20 x 20 x 8" in out
    assert "2 classes" in out
    assert (tmp_path / "split.txt").exists()


def test_errors_exit_with_status_one(tmp_path, capsys):
    code = main(QUIET + ["ingest", "--cube", str(tmp_path / "missing"), "--labels", str(tmp_path / "gt")])
    assert code == 1
    assert "[ERROR]" in capsys.readouterr().err


def test_stage_by_stage_commands(scene_files, tmp_path, capsys):
    cube, labels = scene_files
    work = tmp_path / "work"
    conf = tmp_path / "quick.conf"
    conf.write_text(QUICK_CONF, encoding="utf-8")

    assert main(QUIET + ["reduce", "--cube", str(cube), "--labels", str(labels), "--beta", "3",
                         "--out", str(work)]) == 0
    assert main(QUIET + ["build-graph", "--features", str(work / "features"), "-K", "5",
                         "--out", str(work / "graph")]) == 0
    assert main(QUIET + ["train", "--features", str(work / "features"), "--graph", str(work / "graph"),
                         "--labels", str(labels), "--config", str(conf), "--pretrain-epochs", "20",
                         "--main-epochs", "10", "--out", str(work / "train")]) == 0
    assert (work / "train" / "train_log.csv").exists()
    assert main(QUIET + ["evaluate", "--checkpoint", str(work / "train" / "checkpoint"),
                         "--features", str(work / "features"), "--labels", str(labels),
                         "--split", str(work / "train" / "split.txt")]) == 0
    report = read_report(work / "train" / "checkpoint" / "metrics.kv")
    assert 0.0 <= report.oa <= 1.0
    predictions, _ = raw_store.read_array(work / "train" / "checkpoint" / "predictions")
    assert predictions.shape == (400,)
    assert main(QUIET + ["render-map", "--labels", str(labels),
                         "--predictions", str(work / "train" / "checkpoint" / "predictions"),
                         "--out", str(work / "map.png"), "--pseudocolor", str(work / "rgb.png"),
                         "--cube", str(cube), "--bands", "0,3,7"]) == 0
    assert (work / "map.png").exists() and (work / "rgb.png").exists()
    assert "nnz=" in capsys.readouterr().out


def test_run_experiment_from_a_config_file(scene_files, tmp_path):
    cube, labels = scene_files
    conf = tmp_path / "exp.conf"
    conf.write_text(QUICK_CONF + f"cube={cube}\nlabels={labels}\nbeta=3\npretrain_epochs=20\nmain_epochs=10\n",
                    encoding="utf-8")
    out = tmp_path / "exp"
    assert main(QUIET + ["run-experiment", "--config", str(conf), "--reps", "1", "--out", str(out),
                         "--cache", str(tmp_path / "cache")]) == 0
    assert (out / "metrics_aggregate.kv").exists()
    assert (out / "map_run0.png").exists()


def test_flags_override_the_config_file(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("k=7\nmain_epochs=20\nseed=4\n", encoding="utf-8")
    config = load_train_config(_namespace(config=str(conf), main_epochs=5, no_gwcl=True))
    assert config.k == 7
    assert config.main_epochs == 5
    assert config.seed == 4
    assert config.disable_gwcl is True and config.disable_ce is False


def test_experiment_overrides(tmp_path):
    conf = tmp_path / "e.conf"
    conf.write_text(f"cube={tmp_path / 'a'}\nlabels={tmp_path / 'b'}\nreps=10\nlambda=3\n", encoding="utf-8")
    spec = load_experiment(_namespace(config=str(conf), reps=2, seed=100, out=str(tmp_path / "o"), no_spatial=True))
    assert spec.repetitions == 2
    assert spec.base_seed == 100
    assert spec.config.lam == 3.0
    assert spec.config.no_spatial_input is True
    with pytest.raises(ConfigError):
        load_experiment(_namespace())


def test_presets():
    assert {"indian_pines", "salinas", "pavia_university"} <= set(available_presets())
    indian = load_preset("indian_pines")
    assert indian["lambda"] == "8" and indian["k"] == "10"
    assert indian["palette"].startswith("#000000,")
    assert load_preset("pavia_university")["k"] == "50"
    with pytest.raises(ConfigError):
        load_preset("no_such_scene")
    spec = load_experiment(_namespace(preset="salinas", cube="x", labels="y"))
    assert spec.config.sigma_n == pytest.approx(0.04)
    assert len(spec.class_names) == 16
    assert np.all(np.array(spec.palette[0]) == 0)

import json

import pytest

from spatialcrime.cli import COMMANDS, EXIT_OK, EXIT_PIPELINE, EXIT_USAGE, main

SMALL = """\
seed = {seed}
output_dir = "{out}"

[synth]
n = 400
n_background_pois = 300

[models.rf]
n_trees = 8

[models.svm]
epochs = 15

[evaluation]
k = 4
"""


def write_config(tmp_path, seed="1", out="out", name="cfg.toml", extra=""):
    path = tmp_path / name
    body = SMALL.format(seed=seed, out=out) if seed is not None else SMALL.replace("seed = {seed}\n", "").format(out=out)
    path.write_text(body + extra)
    return path


def run(*argv):
    return main([str(a) for a in argv])


@pytest.mark.parametrize("command", [None, *COMMANDS])
def test_help(command, capsys):
    argv = ["--help"] if command is None else [command, "--help"]
    assert run(*argv) == EXIT_OK
    assert "usage:" in capsys.readouterr().out


def test_no_command_is_usage_error(capsys):
    assert run() == EXIT_USAGE


def test_unknown_flag(capsys):
    assert run("synth", "--bogus") == EXIT_USAGE
    assert "unrecognized arguments" in capsys.readouterr().err


def test_missing_seed(tmp_path, capsys):
    cfg = write_config(tmp_path, seed=None)
    assert run("synth", "--config", cfg) == EXIT_USAGE
    assert "seed is required" in capsys.readouterr().err


def test_seed_flag_fills_in(tmp_path, capsys):
    cfg = write_config(tmp_path, seed=None)
    assert run("synth", "--config", cfg, "--seed", 4) == EXIT_OK
    assert (tmp_path / "out" / "ucr_eval.csv").is_file()


@pytest.mark.parametrize("doc, needle", [
    ("bogus = 1\n", "unknown top-level"),
    ("[evaluation]\nk = 1\n", "evaluation.k"),
    ("[models.svm]\nC = -1.0\n", "C must be positive"),
    ("[geocoder]\nmode = 'carrier-pigeon'\n", "geocoder.mode"),
    ("seed = 'x'\n", "seed must be an integer"),
    ("[hdbscan.Burglary]\nmin_cluster_size = 5\n", "hdbscan.Burglary"),
    ("this is not toml", "invalid TOML"),
])
def test_bad_config(tmp_path, capsys, doc, needle):
    path = tmp_path / "bad.toml"
    path.write_text(doc)
    assert run("synth", "--config", path) == EXIT_USAGE
    assert needle in capsys.readouterr().err


def test_bad_category(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run("hotspots", "--config", cfg, "--category", "Burglary") == EXIT_USAGE


def test_missing_inputs(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run("hotspots", "--config", cfg, "--category", "Assault") == EXIT_USAGE
    assert "missing input" in capsys.readouterr().err


def test_missing_artifact_is_pipeline_error(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run("synth", "--config", cfg) == EXIT_OK
    assert run("featurize", "--config", cfg, "--category", "Assault") == EXIT_PIPELINE
    assert "run 'hotspots' first" in capsys.readouterr().err


def test_report_missing_file(tmp_path, capsys):
    assert run("report", tmp_path / "nope.json") == EXIT_USAGE


def test_report_invalid_json(tmp_path, capsys):
    bad = tmp_path / "r.json"
    bad.write_text("{")
    assert run("report", bad) == EXIT_PIPELINE


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipe")
    cfg = write_config(tmp, out=str(tmp / "out"))
    for cmd in ("synth", "ingest", "pois", "hotspots"):
        assert run(cmd, "--config", cfg, "--category", "all") == EXIT_OK, cmd
    return tmp, cfg


class TestPipeline:

    def test_hotspot_outputs(self, workdir):
        tmp, _ = workdir
        gj = json.loads((tmp / "out" / "hotspots_Assault.geojson").read_text())
        assert gj["type"] == "FeatureCollection" and gj["features"]
        assert (tmp / "out" / "hotpoints_Assault.npz").is_file()

    def test_featurize_and_train(self, workdir, capsys):
        tmp, cfg = workdir
        assert run("featurize", "--config", cfg, "--category", "Assault") == EXIT_OK
        assert run("train", "--config", cfg, "--category", "Assault") == EXIT_OK
        out = tmp / "out"
        plan = json.loads((out / "feature_plan_Assault.json").read_text())
        model = json.loads((out / "model_Assault_engineered.json").read_text())
        assert json.dumps(model).count(plan["checksum"]) == 1
        header = (out / "features_Assault_engineered.csv").read_text().splitlines()[0]
        assert header.split(",")[-3:] == ["dist_hotpoint_Assault", "no_hotpoint_Assault", "label"]

    def test_overlap_aborts(self, workdir, capsys):
        tmp, cfg = workdir
        extra = f'[paths]\neval_csv = "{tmp / "out" / "ucr_train.csv"}"\n'
        leaky = write_config(tmp, out=str(tmp / "out"), name="leaky.toml", extra=extra)
        assert run("featurize", "--config", leaky, "--category", "Assault") == EXIT_PIPELINE
        assert "overlaps" in capsys.readouterr().err
        assert run("featurize", "--config", leaky, "--category", "Assault", "--allow-period-overlap") == EXIT_OK

    def test_eval_and_report(self, workdir, capsys):
        tmp, cfg = workdir
        assert run("eval", "--config", cfg, "--category", "Assault") == EXIT_OK
        out = tmp / "out"
        assert (out / "report_Assault.txt").read_text().startswith("Accuracy (%)")
        assert run("report", out / "report_Assault.json", "-o", out / "table.txt") == EXIT_OK
        assert (out / "table.txt").read_text() == (out / "report_Assault.txt").read_text()

"""Tests for the command-line interface: exit codes, chaining, determinism."""

import pytest

from dfflow.cli import main


def run_ok(argv, capsys):
    rc = main(argv)
    out = capsys.readouterr().out
    assert rc == 0, out
    return out


# --- argument handling ----------------------------------------------------


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    assert "subcommand" in capsys.readouterr().out or True


@pytest.mark.parametrize(
    "sub", ["extract", "flow", "colorize", "synth", "train", "eval", "sweep", "gradcheck"]
)
def test_subcommand_help_exits_zero(sub, capsys):
    with pytest.raises(SystemExit) as e:
        main([sub, "--help"])
    assert e.value.code == 0
    assert "--help" in capsys.readouterr().out


def test_no_arguments_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["transmogrify"])
    assert e.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_missing_required_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["synth", "--out", "d"])
    assert e.value.code == 1


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["gradcheck", "--bogus"])
    assert e.value.code == 1


def test_bad_frame_counts_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["sweep", "--manifest", "m", "--frame-counts", "a,b", "--report", "r"])
    assert e.value.code == 1


# --- runtime errors -------------------------------------------------------


def test_missing_input_is_runtime_error(tmp_path, capsys):
    rc = main(["flow", "--frames", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_colorize_empty_dir_is_runtime_error(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    rc = main(["colorize", "--flows", str(empty), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_train_bad_manifest_is_runtime_error(tmp_path, capsys):
    bad = tmp_path / "m.csv"
    bad.write_text("whatever\n")
    rc = main(["train", "--manifest", str(bad), "--variant", "of_cnn",
               "--epochs", "1", "--batch", "2", "--seed", "0",
               "--out", str(tmp_path / "m.dfnn")])
    assert rc == 2


# --- end-to-end chains ----------------------------------------------------


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("clidata")
    rc = main(["synth", "--out", str(root / "data"), "--real", "3", "--fake", "3",
               "--seed", "50", "--frames", "4", "--size", "32"])
    assert rc == 0
    return root / "data"


TRAIN_FLAGS = ["--variant", "of_rnn_cnn", "--epochs", "2", "--batch", "4",
               "--lr", "1e-3", "--seed", "1", "--frames", "3", "--size", "32"]


@pytest.fixture(scope="module")
def model_path(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("climodel") / "model.dfnn"
    rc = main(["train", "--manifest", str(dataset / "manifest.csv"),
               *TRAIN_FLAGS, "--out", str(out)])
    assert rc == 0
    return out


def test_synth_layout(dataset):
    assert (dataset / "manifest.csv").is_file()
    clips = sorted(p.name for p in dataset.iterdir() if p.is_dir())
    assert clips == ["fake_000000", "fake_000001", "fake_000002",
                     "real_000000", "real_000001", "real_000002"]


def test_extract_flow_colorize_chain(dataset, tmp_path, capsys):
    frames, flows, colors = tmp_path / "f", tmp_path / "fl", tmp_path / "c"
    run_ok(["extract", "--input", str(dataset / "real_000000"), "--out", str(frames),
            "--frames", "3", "--size", "32"], capsys)
    assert sorted(p.name for p in frames.iterdir()) == [
        "000000.pgm", "000001.pgm", "000002.pgm"]
    run_ok(["flow", "--frames", str(frames), "--out", str(flows), "--iters", "40"], capsys)
    assert sorted(p.name for p in flows.iterdir()) == ["000000.flo", "000001.flo"]
    run_ok(["colorize", "--flows", str(flows), "--out", str(colors)], capsys)
    assert sorted(p.name for p in colors.iterdir()) == ["000000.png", "000001.png"]


def test_train_writes_model_and_sidecar(model_path):
    assert model_path.is_file()
    sidecar = model_path.with_name(model_path.name + ".json")
    assert sidecar.is_file()
    text = sidecar.read_text()
    for key in ('"frames"', '"split_seed"', '"train_frac"', '"variant"'):
        assert key in text


def test_train_rerun_byte_identical(dataset, model_path, tmp_path, capsys):
    again = tmp_path / "again.dfnn"
    run_ok(["train", "--manifest", str(dataset / "manifest.csv"),
            *TRAIN_FLAGS, "--out", str(again)], capsys)
    assert again.read_bytes() == model_path.read_bytes()


def test_train_threaded_matches_serial(dataset, model_path, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DFFLOW_THREADS", "3")
    again = tmp_path / "threaded.dfnn"
    run_ok(["train", "--manifest", str(dataset / "manifest.csv"),
            *TRAIN_FLAGS, "--out", str(again)], capsys)
    assert again.read_bytes() == model_path.read_bytes()


def test_eval_writes_report(dataset, model_path, tmp_path, capsys):
    report = tmp_path / "report"
    out = run_ok(["eval", "--model", str(model_path),
                  "--manifest", str(dataset / "manifest.csv"),
                  "--report", str(report)], capsys)
    assert "accuracy" in out
    lines = (report / "metrics.csv").read_text().splitlines()
    assert lines[0] == "accuracy,precision,recall,f1,auc"
    assert len(lines) == 2
    assert (report / "roc.csv").is_file()


def test_sweep_report_and_determinism(dataset, tmp_path, capsys):
    flags = ["sweep", "--manifest", str(dataset / "manifest.csv"),
             "--frame-counts", "2,3", "--epochs", "2", "--batch", "4",
             "--lr", "1e-3", "--seed", "1", "--size", "32"]
    a, b = tmp_path / "a", tmp_path / "b"
    run_ok(flags + ["--report", str(a)], capsys)
    run_ok(flags + ["--report", str(b)], capsys)
    for name in ("sweep.csv", "roc_2.csv", "roc_3.csv", "roc.svg", "metrics_vs_frames.svg"):
        assert (a / name).is_file()
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_gradcheck_passes(capsys):
    out = run_ok(["gradcheck"], capsys)
    assert "max relative error" in out

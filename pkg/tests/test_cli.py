"""End-to-end command-line runs: artifacts, determinism, exit codes."""

import csv

import pytest

from drrho import cli, data, encoder, experiments, trainer


def _gen(tmp_path, seed=0, n=96):
    path = tmp_path / "d.dpd"
    rc = cli.run(
        [
            "gen-data",
            "--n", str(n),
            "--d-x", "12",
            "--d-y", "10",
            "--d-latent", "4",
            "--noise-sigma", "0.25",
            "--test-fraction", "0.25",
            "--seed", str(seed),
            "--output", str(path),
        ]
    )
    assert rc == 0
    return path


def _make_cache(tmp_path, data_path):
    ds = data.load_dataset(data_path)
    model = encoder.init_model(6, ds.d_x, ds.d_y, seed=99)
    ckpt = tmp_path / "ref.ckpt"
    encoder.save_model(model, ckpt)
    cache_path = tmp_path / "c.emb"
    rc = cli.run(["ref-embed", "--data", str(data_path), "--model", str(ckpt), "--output", str(cache_path)])
    assert rc == 0
    return cache_path


def test_gen_data_round_trip(tmp_path):
    path = _gen(tmp_path)
    ds = data.load_dataset(path)
    assert ds.n == 96
    again = data.generate_synthetic(96, 12, 10, 4, 0.25, 0.25, seed=0)
    assert ds.content_hash() == again.content_hash()


def test_train_repeat_is_bit_identical(tmp_path):
    data_path = _gen(tmp_path)
    cache_path = _make_cache(tmp_path, data_path)
    args = [
        "train",
        "--method", "drrho-clip",
        "--data", str(data_path),
        "--ref", str(cache_path),
        "--steps", "15",
        "--batch-size", "16",
        "--embed-dim", "6",
        "--seed", "7",
    ]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.run(args + ["--output", str(out_a)]) == 0
    assert cli.run(args + ["--output", str(out_b)]) == 0
    assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()
    assert (out_a / "series.csv").read_bytes() == (out_b / "series.csv").read_bytes()
    assert (out_a / "model.ckpt").read_bytes() == (out_b / "model.ckpt").read_bytes()
    assert (out_a / "trainer.ckpt").read_bytes() == (out_b / "trainer.ckpt").read_bytes()


def test_train_all_methods_smoke(tmp_path):
    data_path = _gen(tmp_path, n=160)
    cache_path = _make_cache(tmp_path, data_path)
    for method in ("openclip", "fastclip", "jest", "jest-topk"):
        out = tmp_path / f"run-{method}"
        rc = cli.run(
            [
                "train",
                "--method", method,
                "--data", str(data_path),
                "--ref", str(cache_path),
                "--steps", "6",
                "--batch-size", "12",
                "--embed-dim", "4",
                "--output", str(out),
            ]
        )
        assert rc == 0
        assert (out / "report.json").exists()


def test_train_distill_smoke(tmp_path):
    data_path = _gen(tmp_path)
    cache_path = _make_cache(tmp_path, data_path)
    rc = cli.run(
        [
            "train",
            "--method", "fastclip",
            "--data", str(data_path),
            "--ref", str(cache_path),
            "--distill",
            "--lambda", "0.25",
            "--steps", "6",
            "--batch-size", "16",
            "--embed-dim", "4",
            "--output", str(tmp_path / "distill"),
        ]
    )
    assert rc == 0


def test_unknown_method_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.run(["train", "--method", "bogus", "--data", "x", "--output", "y"])
    assert exc.value.code == 2


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.run(["frobnicate"])
    assert exc.value.code == 2


def test_config_error_exits_1_naming_field(tmp_path, capsys):
    data_path = _gen(tmp_path)
    cache_path = _make_cache(tmp_path, data_path)
    rc = cli.run(
        [
            "train",
            "--method", "drrho-clip",
            "--data", str(data_path),
            "--ref", str(cache_path),
            "--gamma", "0.0",
            "--output", str(tmp_path / "bad"),
        ]
    )
    assert rc == 1
    assert "gamma" in capsys.readouterr().err


def test_missing_reference_exits_1(tmp_path, capsys):
    data_path = _gen(tmp_path)
    rc = cli.run(
        [
            "train",
            "--method", "drrho-clip",
            "--data", str(data_path),
            "--steps", "4",
            "--output", str(tmp_path / "noref"),
        ]
    )
    assert rc == 1
    assert "reference" in capsys.readouterr().err


def test_eval_and_variance_commands(tmp_path, capsys):
    data_path = _gen(tmp_path)
    cache_path = _make_cache(tmp_path, data_path)
    out = tmp_path / "run"
    cli.run(
        [
            "train",
            "--method", "fastclip",
            "--data", str(data_path),
            "--steps", "10",
            "--batch-size", "16",
            "--embed-dim", "6",
            "--output", str(out),
        ]
    )
    rc = cli.run(
        ["eval", "--model", str(out / "model.ckpt"), "--data", str(data_path), "--output", str(tmp_path / "ev")]
    )
    assert rc == 0
    assert "recall_at_1" in capsys.readouterr().out
    rc = cli.run(
        [
            "variance",
            "--model", str(out / "model.ckpt"),
            "--data", str(data_path),
            "--ref", str(cache_path),
            "--output", str(tmp_path / "var"),
        ]
    )
    assert rc == 0
    captured = capsys.readouterr().out
    assert "plain variance" in captured and "shifted variance" in captured


def test_sweep_command(tmp_path, capsys):
    data_path = _gen(tmp_path, n=160)
    rc = cli.run(
        [
            "sweep",
            "--data", str(data_path),
            "--methods", "fastclip",
            "--fractions", "1.0,0.5",
            "--steps", "8",
            "--batch-size", "12",
            "--embed-dim", "4",
            "--output", str(tmp_path / "sweep"),
        ]
    )
    assert rc == 0
    assert (tmp_path / "sweep" / "report.json").exists()


def test_scaling_fit_command(tmp_path, capsys):
    path = tmp_path / "points.csv"
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["compute", "error"])
        for c in (1e4, 1e5, 1e6):
            writer.writerow([c, 2.0 * c**-0.1])
    rc = cli.run(["scaling-fit", str(path)])
    assert rc == 0
    out = capsys.readouterr().out
    alpha = float(out.split("alpha:")[1].split()[0])
    beta = float(out.split("beta:")[1].split()[0])
    pts = [experiments.ScalingPoint(c, 2.0 * c**-0.1) for c in (1e4, 1e5, 1e6)]
    want_alpha, want_beta, _ = experiments.fit_scaling_law(pts)
    assert alpha == pytest.approx(want_alpha, rel=1e-6)
    assert beta == pytest.approx(want_beta, rel=1e-6)


def test_scaling_fit_bad_csv_exits_1(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1,2\n")
    rc = cli.run(["scaling-fit", str(path)])
    assert rc == 1


def test_corrupt_artifact_reported_as_error(tmp_path, capsys):
    data_path = _gen(tmp_path)
    blob = bytearray(data_path.read_bytes())
    blob[-1] ^= 0xFF
    data_path.write_bytes(bytes(blob))
    rc = cli.run(["eval", "--model", "nope.ckpt", "--data", str(data_path), "--output", str(tmp_path / "e")])
    assert rc == 1


def test_plot_data_emitter(tmp_path):
    data_path = _gen(tmp_path)
    out = tmp_path / "run"
    rc = cli.run(
        [
            "train",
            "--method", "fastclip",
            "--data", str(data_path),
            "--steps", "10",
            "--batch-size", "16",
            "--embed-dim", "6",
            "--plot-data",
            "--output", str(out),
        ]
    )
    assert rc == 0
    plots = list((out / "plot-data").glob("*.csv"))
    assert any(p.name == "objective.csv" for p in plots)
    with open(out / "plot-data" / "objective.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["x", "y"]
    assert len(rows) > 1

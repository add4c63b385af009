import numpy as np
import pytest

from repeatmix import synth
from repeatmix.cli import main


@pytest.fixture(scope="module")
def small_csv(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    path = root / "toy.csv"
    src, dst, ts = synth.conversation_stream(
        n_nodes=40, n_events=900, horizon=5e5, seed=3
    )
    synth.write_stream_csv(path, src, dst, ts)
    return path


@pytest.fixture(scope="module")
def small_cache(small_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("cache") / "toy.rmxg"
    rc = main(["ingest", str(small_csv), "--out", str(out),
               "--node-dim", "0", "--edge-dim", "0"])
    assert rc == 0
    return out


def run_train(small_cache, out_dir, seed=0, extra=()):
    args = [
        "train", "--cache", str(small_cache), "--out", str(out_dir),
        "--seed", str(seed), "--epochs", "2", "--patience", "2",
        "--model", "repeatmixer-f",
        "--config", str(out_dir / "cfg.txt"),
    ]
    (out_dir / "cfg.txt").write_text(
        "data_node_dim = 0\ndata_edge_dim = 0\nsampler_k = 4\n"
        "mixer_width = 8\nmixer_layers = 1\ntime_dim = 8\nmodel_seg_dim = 4\n"
        "train_batch_size = 64\n"
    )
    return main(args + list(extra))


class TestIngest:
    def test_idempotent_cache(self, small_csv, tmp_path, capsys):
        a = tmp_path / "a.rmxg"
        b = tmp_path / "b.rmxg"
        assert main(["ingest", str(small_csv), "--out", str(a)]) == 0
        assert main(["ingest", str(small_csv), "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        out = capsys.readouterr().out
        assert "repeat_ratio=" in out

    def test_repeat_ratio_value(self, tmp_path, capsys):
        path = tmp_path / "tiny.csv"
        path.write_text("0,1,1.0,0\n0,1,2.0,0\n0,2,3.0,0\n")
        assert main(["ingest", str(path), "--out", str(tmp_path / "t.rmxg")]) == 0
        out = capsys.readouterr().out
        assert f"repeat_ratio={1/3!r}" in out

    def test_empty_file_error(self, tmp_path, capsys):
        path = tmp_path / "empty.csv"
        path.write_text("")
        rc = main(["ingest", str(path), "--out", str(tmp_path / "e.rmxg")])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_parse_error_includes_line(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("0,1,1.0,0\nnot,a,row\n")
        rc = main(["ingest", str(path), "--out", str(tmp_path / "b.rmxg")])
        assert rc == 1
        assert "line 2" in capsys.readouterr().err


class TestTrainEval:
    def test_train_writes_artifacts(self, small_cache, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        assert run_train(small_cache, out) == 0
        assert (out / "checkpoint.rmxc").exists()
        metrics = (out / "metrics.txt").read_text()
        assert "split=val" in metrics and "ap=" in metrics
        assert "seconds=" not in metrics  # wall-clock never lands in the file

    def test_seeded_metrics_identical(self, small_cache, tmp_path):
        out1 = tmp_path / "r1"
        out2 = tmp_path / "r2"
        out1.mkdir(), out2.mkdir()
        assert run_train(small_cache, out1, seed=7) == 0
        assert run_train(small_cache, out2, seed=7) == 0
        assert (out1 / "metrics.txt").read_bytes() == (out2 / "metrics.txt").read_bytes()

    def test_eval_runs_all_strategies(self, small_cache, tmp_path, capsys):
        out = tmp_path / "run"
        out.mkdir()
        assert run_train(small_cache, out) == 0
        for neg in ("rnd", "hist", "ind"):
            rc = main([
                "eval", "--cache", str(small_cache),
                "--checkpoint", str(out / "checkpoint.rmxc"),
                "--neg", neg, "--out", str(out / f"eval_{neg}.txt"),
            ])
            assert rc == 0
            text = (out / f"eval_{neg}.txt").read_text()
            assert f"strategy={neg}" in text and "auc=" in text

    def test_eval_deterministic(self, small_cache, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        assert run_train(small_cache, out) == 0
        for i in (1, 2):
            main([
                "eval", "--cache", str(small_cache),
                "--checkpoint", str(out / "checkpoint.rmxc"),
                "--neg", "rnd", "--out", str(out / f"e{i}.txt"),
            ])
        assert (out / "e1.txt").read_bytes() == (out / "e2.txt").read_bytes()

    def test_missing_checkpoint_error(self, small_cache, tmp_path, capsys):
        rc = main([
            "eval", "--cache", str(small_cache),
            "--checkpoint", str(tmp_path / "missing.rmxc"),
        ])
        assert rc == 1
        assert "error" in capsys.readouterr().err


class TestBenchAndAnalysis:
    def test_sample_bench_schema(self, small_cache, capsys):
        rc = main(["sample-bench", "--cache", str(small_cache),
                   "--queries", "64", "--k", "8"])
        assert rc == 0
        out = capsys.readouterr().out.strip().splitlines()
        # 2 backends x 3 strategies
        assert len(out) == 6
        assert all("p99_us=" in line and "qps=" in line for line in out)
        assert any("backend=python" in line for line in out)
        assert any("backend=cython" in line for line in out)

    def test_bench_deterministic_queries(self, small_cache, capsys):
        main(["sample-bench", "--cache", str(small_cache), "--queries", "32",
              "--seed", "5"])
        a = [l.split(" qps")[0].rsplit(" mean_us", 1)[0]
             for l in capsys.readouterr().out.splitlines()]
        main(["sample-bench", "--cache", str(small_cache), "--queries", "32",
              "--seed", "5"])
        b = [l.split(" qps")[0].rsplit(" mean_us", 1)[0]
             for l in capsys.readouterr().out.splitlines()]
        assert a == b

    def test_pcc_analysis_schema(self, small_cache, capsys):
        rc = main(["pcc-analysis", "--cache", str(small_cache),
                   "--limit", "40", "--k", "8"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2  # exactly 2 strategies x (pos, neg, gap) fields
        for line in lines:
            assert "mean_pcc_pos=" in line and "mean_pcc_neg=" in line
            assert "discrepancy=" in line
            pos = float(line.split("mean_pcc_pos=")[1].split()[0])
            neg = float(line.split("mean_pcc_neg=")[1].split()[0])
            gap = float(line.split("discrepancy=")[1].split()[0])
            assert gap == pytest.approx(pos - neg, abs=1e-12)


class TestFallbackReporting:
    def test_hist_all_fallback_noted(self, tmp_path, capsys):
        # no source has two distinct partners, so hist candidates are always
        # empty once the true destination is excluded: every negative is rnd
        rows = "".join(f"{i},{i+50},{float(i)!r},0\n" for i in range(40))
        csv = tmp_path / "norep.csv"
        csv.write_text(rows)
        cache = tmp_path / "norep.rmxg"
        assert main(["ingest", str(csv), "--out", str(cache),
                     "--node-dim", "0", "--edge-dim", "0"]) == 0
        out = tmp_path / "run"
        out.mkdir()
        assert run_train(cache, out) == 0
        capsys.readouterr()
        assert main([
            "eval", "--cache", str(cache),
            "--checkpoint", str(out / "checkpoint.rmxc"), "--neg", "hist",
        ]) == 0
        text = capsys.readouterr().out
        assert "rnd_fallbacks=6" in text  # the whole 6-edge test range fell back


def test_cli_ablation_flags(small_cache, tmp_path):
    out = tmp_path / "ablate"
    out.mkdir()
    assert run_train(small_cache, out, extra=["--ablation", "no-te"]) == 0
    from repeatmix import checkpoint as ckpt_mod

    ckpt = ckpt_mod.load(out / "checkpoint.rmxc")
    assert ckpt.config.model_no_time_encoding is True
    assert ckpt.config.model_second_order is False  # repeatmixer-f flag

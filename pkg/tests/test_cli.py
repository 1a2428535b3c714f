import json

import numpy as np
import pytest

from mlpf_hw.cli import main, sha256
from mlpf_hw.events import SensorGeometry, parse_stream

SMALL = ["--width", "40", "--height", "30"]


def run(*argv):
    return main([str(a) for a in argv])


def gen(path, *extra):
    assert run("gen", "--preset", "dense", "--duration", "0.3", "--noise-hz", "20",
               "--seed", 3, "--out", path, *SMALL, *extra) == 0


def pipeline(d, capsys=None):
    """gen -> train -> denoise (mlpf, baf) -> eval -> hwsim inside directory ``d``."""
    gen(d / "data.csv")
    assert run("train", "--data", d / "data.csv", "--epochs", 2, "--steps-per-epoch", 30,
               "--out", d / "w.txt", "--history", d / "hist.csv", *SMALL) == 0
    assert run("denoise", "--input", d / "data.csv", "--weights", d / "w.txt",
               "--out", d / "dec.csv", *SMALL) == 0
    assert run("denoise", "--filter", "baf", "--input", d / "data.csv",
               "--out", d / "baf.csv", *SMALL) == 0
    assert run("eval", "--decisions", d / "dec.csv", "--out", d / "roc.csv") == 0
    assert run("eval", "--decisions", d / "baf.csv", "--out", d / "roc_baf.csv") == 0
    assert run("hwsim", "--platform", "asic_65nm", "--events", d / "data.csv",
               "--raw-rate", 1e7, "--denoised-rate", 1e5, "--out", d / "hw.csv", *SMALL) == 0
    return sorted(p.name for p in d.iterdir())


def test_pipelines_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    names = pipeline(a)
    assert names == pipeline(b)
    assert len(names) == 15
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_manifest_hashes(tmp_path):
    gen(tmp_path / "data.csv")
    m = json.loads((tmp_path / "data.csv.manifest.json").read_text())
    assert m["subcommand"] == "gen" and m["seed"] == 3
    assert m["outputs"]["data.csv"] == sha256(tmp_path / "data.csv")
    assert m["config"]["preset"] == "dense"


def test_gen_without_noise_is_pure_signal(tmp_path):
    gen(tmp_path / "sig.csv", "--noise-hz", "0")
    ev = parse_stream(tmp_path / "sig.csv", SensorGeometry(40, 30))
    assert len(ev) > 0 and (ev.label == 1).all()


def test_usage_errors_exit_2(capsys):
    for argv in (["gen"], ["denoise", "--filter", "median", "--input", "x", "--out", "y"],
                 ["train", "--data", "x", "--out", "y", "--bits", "1"],
                 ["hwsim", "--platform", "gpu"], ["frobnicate"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


def test_data_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t_us,x,y,p\n5,1,1,1\n3,1,1,1\n")
    assert run("denoise", "--filter", "baf", "--input", bad, "--out", tmp_path / "o.csv") == 1
    assert "line 3" in capsys.readouterr().err
    assert run("denoise", "--input", bad, "--out", tmp_path / "o.csv") == 1     # no weights
    nolabel = tmp_path / "nl.csv"
    nolabel.write_text("t_us,x,y,pred,logit\n1,1,1,1,5\n")
    assert run("eval", "--decisions", nolabel, "--out", tmp_path / "r.csv") == 1
    assert run("train", "--data", tmp_path / "missing.csv", "--out", tmp_path / "w") == 1


def test_denoise_empty_input(tmp_path):
    gen(tmp_path / "d.csv")
    run("train", "--data", tmp_path / "d.csv", "--epochs", 1, "--steps-per-epoch", 5,
        "--out", tmp_path / "w.txt", *SMALL)
    empty = tmp_path / "empty.csv"
    empty.write_text("t_us,x,y,p\n")
    assert run("denoise", "--input", empty, "--weights", tmp_path / "w.txt",
               "--out", tmp_path / "o.csv", *SMALL) == 0
    assert (tmp_path / "o.csv").read_text() == "t_us,x,y,p,pred,logit\n"


def test_eval_ideal_and_shuffled(tmp_path, capsys):
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 2, 4000)
    rows = ["t_us,x,y,p,pred,logit,label"]
    rows += [f"{i},0,0,1,{y},{100 * y + i % 7},{y}" for i, y in enumerate(labels)]
    ideal = tmp_path / "ideal.csv"
    ideal.write_text("\n".join(rows) + "\n")
    assert run("eval", "--decisions", ideal, "--out", tmp_path / "r.csv") == 0
    assert "auc=1.000000" in capsys.readouterr().out
    shuffled = rng.permutation(labels)
    rows = ["t_us,x,y,p,pred,logit,label"]
    rows += [f"{i},0,0,1,0,{100 * y},{s}" for i, (y, s) in enumerate(zip(labels, shuffled))]
    (tmp_path / "shuf.csv").write_text("\n".join(rows) + "\n")
    assert run("eval", "--decisions", tmp_path / "shuf.csv", "--out", tmp_path / "r2.csv") == 0
    auc = float(capsys.readouterr().out.strip().split("=")[1])
    assert abs(auc - 0.5) < 0.03


def test_hwsim_reports(capsys):
    assert run("hwsim", "--platform", "asic_65nm", "--rate", 1e6) == 0
    assert "power_mw=39\n" in capsys.readouterr().out
    assert run("hwsim", "--platform", "fpga_xc7z100") == 0
    assert "latency_ns=100\n" in capsys.readouterr().out
    assert run("hwsim", "--platform", "asic_65nm", "--rate", 0) == 0
    assert "power_mw=35\n" in capsys.readouterr().out


def test_train_reports_diversity(tmp_path, capsys):
    gen(tmp_path / "d.csv")
    out = {}
    for bits in (2, 4):
        assert run("train", "--data", tmp_path / "d.csv", "--bits", bits, "--epochs", 2,
                   "--steps-per-epoch", 30, "--out", tmp_path / f"w{bits}.txt", *SMALL) == 0
        report = dict(ln.split("=") for ln in capsys.readouterr().out.split())
        out[bits] = report
        assert report["params"] == "1001"
    assert int(out[2]["distinct_logits"]) < int(out[4]["distinct_logits"])

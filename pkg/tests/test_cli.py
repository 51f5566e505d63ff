import csv
import io

import numpy as np
import pytest

from stftkan import checkpoint, cli, data, ndcore
from stftkan.gradcheck import gradcheck_architecture
from stftkan.model import LiteDgcnn

from conftest import CONFIGS

TINY = ["--set", "hidden=8", "--set", "edge_out=16", "--set", "emb_dims=32", "--set", "k=4",
        "--set", "ecl2.window_size=4", "--set", "ecl2.stride=2",
        "--set", "fel.window_size=6", "--set", "fel.stride=4",
        "--set", "cl.window_size=20", "--set", "cl.stride=7",
        "--set", "hybrid_cl.window_size=16", "--set", "hybrid_cl.stride=5"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_params_table(capsys):
    code, out, _ = run(capsys, "params")
    assert code == 0
    table = {r[0]: int(r[1]) for r in rows(out)[1:]}
    assert table == {"mlp": 155207, "stft-kan": 77391, "stft-kan-mlp": 93113, "fourier-kan": 309191}


def test_params_plot(capsys, tmp_path):
    code, _, _ = run(capsys, "params", "--plot", str(tmp_path / "p.png"))
    assert code == 0 and (tmp_path / "p.png").stat().st_size > 0


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["train"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["params", "--variant", "cnn"])
    assert info.value.code == 1
    code, _, err = run(capsys, "train", "--data", "synthetic:4:16", "--set", "nonsense")
    assert code == 1 and "key=value" in err


def test_missing_data_exit_2(capsys, tmp_path):
    code, _, _ = run(capsys, "train", "--data", str(tmp_path / "none.stpc"))
    assert code == 2
    code, _, _ = run(capsys, "report", "--run", str(tmp_path))
    assert code == 2


def test_nan_exit_3(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--data", "synthetic:5:32", "--epochs", "2", "--out", str(tmp_path),
                       "--set", "lr=nan", "--set", "eta_min=nan", "--no-plot", *TINY)
    assert code == 3 and "batch" in err


def test_bad_checkpoint_exit_4(capsys, tmp_path):
    (tmp_path / "x.ckpt").write_bytes(b"nope")
    code, _, _ = run(capsys, "eval", "--ckpt", str(tmp_path / "x.ckpt"), "--data", "synthetic:5:32")
    assert code == 4


def test_train_eval_report_roundtrip(capsys, tmp_path):
    out = tmp_path / "run"
    code, text, _ = run(capsys, "train", "--variant", "mlp", "--data", "synthetic:5:32", "--epochs", "2",
                        "--batch", "4", "--threads", "1", "--out", str(out), *TINY)
    assert code == 0
    summary = dict(zip(*rows(text)[:2]))
    assert (out / "curves.png").exists() and (out / "metrics.csv").exists()
    code, text, _ = run(capsys, "eval", "--ckpt", str(out / "final.ckpt"), "--data", "synthetic:5:32")
    assert code == 0
    assert rows(text)[1][2] == summary["final_oa"]
    code, text, _ = run(capsys, "report", "--run", str(out), "--out", str(tmp_path))
    assert code == 0 and (tmp_path / "curves.png").exists()


def test_preprocess(capsys, tmp_path):
    rng = np.random.default_rng(0)
    for cls in ("a", "b"):
        (tmp_path / "raw" / cls).mkdir(parents=True)
        for i in range(5):
            np.savetxt(tmp_path / "raw" / cls / f"{i}.xyz", rng.normal(size=(40, 3)))
    code, text, _ = run(capsys, "preprocess", "--input", str(tmp_path / "raw"),
                        "--output", str(tmp_path / "c.stpc"), "--points", "16")
    assert code == 0
    assert rows(text)[-1][:3] == ["total", "8", "2"]
    ds = data.read_cache(tmp_path / "c.stpc")
    assert len(ds.clouds) == 10 and ds.clouds[0].points.shape == (16, 3)


def test_gradcheck_command(capsys):
    code, text, _ = run(capsys, "gradcheck", "--seed", "2")
    assert code == 0
    assert all(r[2] == "pass" for r in rows(text)[1:])


def test_search_command(capsys, tmp_path):
    space = tmp_path / "s.cfg"
    space.write_text("ecl2.window_size=2-6\necl2.stride=1-3\nfel.window_size=4-12\nfel.stride=2-6\n"
                     "fel.grid_size=1-3\ncl.window_size=8-40\ncl.stride=4-12\ncl.grid_size=1-3\n")
    code, text, _ = run(capsys, "search", "--space", str(space), "--trials", "2", "--epochs", "1",
                        "--data", "synthetic:5:32", "--out", str(tmp_path / "s"),
                        "--config", str(CONFIGS / "smoke.cfg"))
    assert code == 0
    table = rows(text)
    assert table[0][:3] == ["rank", "trial", "test_oa"] and len(table) == 3
    assert (tmp_path / "s" / "search.csv").exists() and (tmp_path / "s" / "search.png").exists()


def test_eval_rejects_class_mismatch(capsys, tmp_path):
    m = LiteDgcnn("mlp", 5, ndcore.Rng(0), gradcheck_architecture())
    checkpoint.save(m, tmp_path / "m.ckpt")
    code, _, _ = run(capsys, "eval", "--ckpt", str(tmp_path / "m.ckpt"), "--data", "synthetic:5:32")
    assert code == 4

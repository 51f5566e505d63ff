import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stftkan import checkpoint, data, ndcore, train
from stftkan.errors import CheckpointError, ConfigError, NumericalError, UsageError
from stftkan.gradcheck import gradcheck_architecture
from stftkan.model import LiteDgcnn, Variant, param_count
from stftkan.windows import WindowKind

ARCH = gradcheck_architecture()


def tiny_config(**kw):
    base = dict(variant="stft-kan", epochs=2, hidden=ARCH.hidden, edge_out=ARCH.edge_out,
                emb_dims=ARCH.emb_dims, k=ARCH.k, points=32, stft=dict(ARCH.stft), hybrid_cl=ARCH.hybrid_cl,
                batch_size=4, threads=1)
    base.update(kw)
    return train.TrainConfig(**base)


@pytest.fixture(scope="module")
def split():
    ds = data.synthetic_shapes(5, 32, seed=0)
    return data.stratified_split(ds.clouds, ds.class_names, 0.8, seed=0)


# ---------------------------------------------------------------- metrics

def test_metrics_examples():
    m = train.compute_metrics([0, 0, 0, 0], [0, 0, 1, 1], 2)
    assert (m.oa, m.ba) == (0.5, 0.5)
    m = train.compute_metrics([0, 0, 0, 0], [0, 0, 0, 1], 2)
    assert (m.oa, m.ba) == (0.75, 0.5)
    m = train.compute_metrics([2, 1, 0], [2, 1, 0], 3)
    assert (m.oa, m.ba) == (1.0, 1.0)


def test_metrics_absent_class_excluded():
    m = train.compute_metrics([0, 1, 2], [0, 1, 1], 3)
    assert m.ba == pytest.approx((1 + 0.5) / 2)
    assert np.isnan(m.recall[2])


def test_metrics_empty():
    with pytest.raises(UsageError):
        train.compute_metrics([], [], 2)


def test_predict_ties_low():
    assert list(train.predict(np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]]))) == [0, 1]


@given(st.integers(0, 2**16))
def test_metrics_direct_formulas(seed):
    rng = np.random.default_rng(seed)
    C = int(rng.integers(2, 6))
    labels = rng.integers(0, C, 40)
    preds = rng.integers(0, C, 40)
    m = train.compute_metrics(preds, labels, C)
    assert m.oa == np.mean(preds == labels)
    recalls = [np.mean(preds[labels == c] == c) for c in range(C) if np.any(labels == c)]
    assert m.ba == pytest.approx(np.mean(recalls), abs=1e-15)
    np.testing.assert_array_equal(m.confusion.sum(axis=1), np.bincount(labels, minlength=C))


# ----------------------------------------------------------------- config

def test_config_defaults():
    cfg = train.TrainConfig()
    assert (cfg.epochs, cfg.lr, cfg.weight_decay, cfg.k, cfg.points, cfg.emb_dims) == (300, 1e-3, 1e-4, 8, 1024, 1024)
    assert cfg.effective_batch_size == 16
    cfg.set("variant", "fourier-kan")
    assert cfg.effective_batch_size == 2


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("# comment\nepochs = 7\nfel.window=kaiser  # trailing\naugment=false\n")
    cfg = train.load_config(p, {"epochs": 9, "seed": None})
    assert cfg.epochs == 9 and cfg.augment is False
    assert cfg.stft["fel"].window == WindowKind.KAISER
    assert cfg.stft["cl"] == train.TrainConfig().stft["cl"]


@pytest.mark.parametrize("text", ["nokey\n", "bogus=1\n", "fel.colour=red\n", "augment=maybe\n", "variant=cnn\n"])
def test_config_errors(tmp_path, text):
    p = tmp_path / "a.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError):
        train.load_config(p)


# ------------------------------------------------------------- checkpoint

@pytest.mark.parametrize("variant", list(Variant))
def test_checkpoint_forward_equivalence(variant):
    m = LiteDgcnn(variant, 3, ndcore.Rng(0), ARCH)
    back = checkpoint.loads(checkpoint.dumps(m))
    rng = ndcore.Rng(1)
    for _ in range(5):
        probe = rng.uniform(-1, 1, (20, 3))
        assert np.max(np.abs(back.forward(probe) - m.forward(probe))) < 1e-7
    assert checkpoint.dumps(back) == checkpoint.dumps(m)


def test_checkpoint_rejects():
    raw = checkpoint.dumps(LiteDgcnn("mlp", 3, ndcore.Rng(0), ARCH))
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint.loads(b"XKCK" + raw[4:])
    with pytest.raises(CheckpointError, match="version"):
        checkpoint.loads(raw[:4] + (2).to_bytes(4, "little") + raw[8:])
    with pytest.raises(CheckpointError, match="truncated"):
        checkpoint.loads(raw[:-1])
    with pytest.raises(CheckpointError):
        checkpoint.loads(raw + b"\0")
    with pytest.raises(CheckpointError, match="mlp"):
        checkpoint.loads(raw, expect_variant="stft-kan")


def test_checkpoint_shape_mismatch():
    raw = bytearray(checkpoint.dumps(LiteDgcnn("mlp", 3, ndcore.Rng(0), ARCH)))
    raw[9:13] = (4).to_bytes(4, "little")  # claim 4 classes
    with pytest.raises(CheckpointError):
        checkpoint.loads(bytes(raw))


def test_checkpoint_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        checkpoint.load(tmp_path / "none.ckpt")


# --------------------------------------------------------------- training

def test_initial_loss_near_log_c(split):
    m = LiteDgcnn("mlp", 3, ndcore.Rng(0), ARCH)
    for p in m.parameters().values():
        p[...] = 0
    from stftkan.nn import weighted_cross_entropy

    pts = np.stack([c.points for c in split.train])
    loss, _ = weighted_cross_entropy(m.forward(pts), [c.label for c in split.train])
    assert loss == pytest.approx(np.log(3), rel=1e-6)


def test_train_writes_outputs(tmp_path, split):
    res = train.train(tiny_config(), split, out_dir=tmp_path)
    for name in ("metrics.csv", "timing.csv", "final.ckpt", "best.ckpt", "state.json", "state.npz"):
        assert (tmp_path / name).exists()
    rows = train.read_csv(tmp_path / "metrics.csv")
    assert [r["epoch"] for r in rows] == [0, 1]
    assert res.final.param_count == param_count("stft-kan", 3, tiny_config().architecture())
    assert res.final.confusion.sum() == len(split.test)


def test_train_deterministic(tmp_path, split):
    train.train(tiny_config(), split, out_dir=tmp_path / "a")
    train.train(tiny_config(), split, out_dir=tmp_path / "b")
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
    assert (tmp_path / "a/final.ckpt").read_bytes() == (tmp_path / "b/final.ckpt").read_bytes()


def test_resume_matches_uninterrupted(tmp_path, split):
    train.train(tiny_config(epochs=4), split, out_dir=tmp_path / "full")
    train.train(tiny_config(epochs=2), split, out_dir=tmp_path / "part")
    train.train(tiny_config(epochs=4), split, out_dir=tmp_path / "part", resume=tmp_path / "part")
    assert (tmp_path / "full/metrics.csv").read_bytes() == (tmp_path / "part/metrics.csv").read_bytes()
    assert (tmp_path / "full/final.ckpt").read_bytes() == (tmp_path / "part/final.ckpt").read_bytes()


def test_evaluate_reproduces_final(tmp_path, split):
    res = train.train(tiny_config(variant="mlp"), split, out_dir=tmp_path)
    m = train.evaluate(tmp_path / "final.ckpt", split, expect_variant="mlp")
    assert (m.oa, m.ba) == (res.final.oa, res.final.ba)
    assert m.oa == train.read_csv(tmp_path / "metrics.csv")[-1]["test_oa"]
    with pytest.raises(CheckpointError):
        train.evaluate(tmp_path / "final.ckpt", split, expect_variant="fourier-kan")


def test_best_checkpoint_matches_best_epoch(tmp_path, split):
    res = train.train(tiny_config(epochs=3), split, out_dir=tmp_path)
    best = train.evaluate(tmp_path / "best.ckpt", split)
    assert best.oa == max(r["test_oa"] for r in res.history)


def test_nan_aborts(split):
    cfg = tiny_config(lr=float("nan"), eta_min=float("nan"))
    with pytest.raises(NumericalError, match="epoch 0 batch 0.*layer ecl1"):
        train.train(cfg, split)


def test_fresh_model_near_prior(split):
    m = LiteDgcnn("stft-kan", 3, ndcore.Rng(0), ARCH)
    metrics = train.evaluate_model(m, split.test, 3)
    assert 0.0 <= metrics.oa <= 1.0 and metrics.param_count == m.param_count()


# ----------------------------------------------------------------- search

def test_space_file(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text("fel.grid_size=2-3\ncl.windows=hann,kaiser\necl1.smooth_init=true\n")
    space = train.read_space(p)
    assert space["fel"].grid_size == (2, 3)
    assert space["cl"].windows == ("hann", "kaiser")
    p.write_text("fel.grid_size=5-2\n")
    with pytest.raises(ConfigError):
        train.read_space(p)


def test_samples_within_bounds():
    space = train.default_space()
    widths = train.TrainConfig().architecture().widths(7)
    rng = ndcore.Rng(0)
    for _ in range(200):
        for stage, spec in train.sample_specs(space, widths, rng).items():
            r = space[stage]
            assert r.grid_size[0] <= spec.grid_size <= r.grid_size[1]
            assert r.window_size[0] <= spec.window_size <= r.window_size[1]
            assert r.stride[0] <= spec.stride <= r.stride[1]
            assert spec.window_size <= widths[stage][0]


def test_infeasible_space_errors():
    space = train.default_space()
    space["ecl1"].window_size = (50, 60)
    with pytest.raises(ConfigError, match="100"):
        train.sample_specs(space, train.TrainConfig().architecture().widths(7), ndcore.Rng(0))


def _small_space():
    space = train.default_space()
    space["ecl1"] = train.LayerRange((1, 3), (2, 4), (1, 3))
    space["ecl2"] = train.LayerRange((1, 3), (2, 6), (1, 4))
    space["fel"] = train.LayerRange((1, 3), (4, 12), (2, 6))
    space["cl"] = train.LayerRange((1, 3), (8, 40), (4, 12))
    return space


def test_search_single_trial_equals_train(split):
    base = tiny_config()
    rows = train.random_search(_small_space(), 1, 2, base, split, seed=4)
    specs = train.sample_specs(_small_space(), base.architecture().widths(3), ndcore.Rng(4))
    res = train.train(dataclasses.replace(base, stft=specs), split)
    assert rows[0]["test_oa"] == res.final.oa and rows[0]["rank"] == 1
    assert rows[0]["cl.window_size"] == specs["cl"].window_size


def test_search_seeded_and_ranked(split):
    a = train.random_search(_small_space(), 3, 1, tiny_config(), split, seed=1)
    b = train.random_search(_small_space(), 3, 1, tiny_config(), split, seed=1)
    assert a == b
    assert [r["rank"] for r in a] == [1, 2, 3]
    assert all(x["test_oa"] >= y["test_oa"] for x, y in zip(a, a[1:]))
    with pytest.raises(UsageError):
        train.random_search(_small_space(), 0, 1, tiny_config(), split)

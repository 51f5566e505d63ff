"""Training loop, evaluation metrics, configuration files and random search."""

from __future__ import annotations

import contextlib
import copy
import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint, ndcore
from .data import DatasetSplit, augment_translate
from .errors import ConfigError, NumericalError, UsageError
from .model import HYBRID_CL, STAGES, DEFAULT_STFT, Architecture, LiteDgcnn, StftLayerSpec, Variant
from .nn import AdamState, LrSchedule, adam_step, weighted_cross_entropy
from .stft_kan import num_windows
from .windows import WINDOW_NAMES, WindowKind

log = logging.getLogger(__name__)

EVAL_BATCH = 8
METRIC_COLUMNS = ("epoch", "lr", "train_loss", "test_oa", "test_ba")


# ------------------------------------------------------------------ config

def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class TrainConfig:
    variant: str = "stft-kan"
    epochs: int = 300
    batch_size: int = 0  # 0 selects 16, or 2 for fourier-kan
    lr: float = 1e-3
    eta_min: float = 1e-3
    weight_decay: float = 1e-4
    seed: int = 0
    k: int = 8
    points: int = 1024
    emb_dims: int = 1024
    hidden: int = 64
    edge_out: int = 128
    augment: bool = True
    translate: float = 0.2
    threads: int = 0  # 0 leaves the BLAS thread pool alone
    stft: dict = field(default_factory=lambda: dict(DEFAULT_STFT))
    hybrid_cl: StftLayerSpec = HYBRID_CL

    @property
    def effective_batch_size(self) -> int:
        if self.batch_size:
            return self.batch_size
        return 2 if Variant.parse(self.variant) == Variant.FOURIER_KAN else 16

    def architecture(self) -> Architecture:
        return Architecture(hidden=self.hidden, edge_out=self.edge_out, emb_dims=self.emb_dims,
                            k=self.k, stft=dict(self.stft), hybrid_cl=self.hybrid_cl)

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, self.eta_min, max(self.epochs, 1))

    def set(self, key: str, value) -> None:
        """Apply one ``key=value`` override; layer keys look like ``fel.grid_size``."""
        key = key.strip().replace("-", "_")
        if "." in key:
            stage, attr = key.split(".", 1)
            if stage == "hybrid_cl":
                self.hybrid_cl = _update_spec(self.hybrid_cl, attr, value)
            elif stage in STAGES:
                self.stft = dict(self.stft)
                self.stft[stage] = _update_spec(self.stft[stage], attr, value)
            else:
                raise ConfigError(f"unknown layer {stage!r} in key {key!r}")
            return
        fields = {f.name: f for f in dataclasses.fields(self)}
        if key not in fields or key in ("stft", "hybrid_cl"):
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(self, key)
        if isinstance(current, bool):
            setattr(self, key, _parse_bool(value))
        elif isinstance(current, int):
            setattr(self, key, int(value))
        elif isinstance(current, float):
            setattr(self, key, float(value))
        else:
            setattr(self, key, str(value).strip())
        if key == "variant":
            Variant.parse(self.variant)


def _update_spec(spec: StftLayerSpec, attr: str, value) -> StftLayerSpec:
    if attr in ("grid_size", "window_size", "stride"):
        return dataclasses.replace(spec, **{attr: int(value)})
    if attr in ("smooth_init", "use_bias"):
        return dataclasses.replace(spec, **{attr: _parse_bool(value)})
    if attr == "window":
        return dataclasses.replace(spec, window=WindowKind.parse(value))
    if attr == "beta":
        return dataclasses.replace(spec, beta=float(value))
    raise ConfigError(f"unknown layer attribute {attr!r}")


def read_kv_file(path) -> list[tuple[str, str]]:
    """``key=value`` lines; ``#`` starts a comment."""
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = text.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path=None, overrides=None) -> TrainConfig:
    cfg = TrainConfig()
    if path is not None:
        for key, value in read_kv_file(path):
            cfg.set(key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg.set(key, value)
    return cfg


# ----------------------------------------------------------------- metrics

@dataclass
class Metrics:
    oa: float
    ba: float
    recall: np.ndarray
    confusion: np.ndarray
    epoch_time_s: float = 0.0
    param_count: int = 0


def predict(logits: np.ndarray) -> np.ndarray:
    """Arg-max class per row; ties go to the lowest class index."""
    return np.argmax(np.asarray(logits), axis=-1)


def compute_metrics(predictions, labels, num_classes: int) -> Metrics:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.size == 0 or predictions.shape != labels.shape:
        raise UsageError("predictions and labels must be non-empty and equally long")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    support = confusion.sum(axis=1)
    tp = np.diag(confusion)
    present = support > 0
    recall = np.divide(tp, support, out=np.full(num_classes, np.nan), where=present)
    oa = float(tp.sum() / support.sum())
    ba = float(recall[present].mean())
    return Metrics(oa, ba, recall, confusion)


# ---------------------------------------------------------------- training

@dataclass
class TrainState:
    adam: AdamState
    epoch: int
    rng_state: dict
    history: list
    best_oa: float = -1.0
    best_epoch: int = -1

    def save(self, path) -> None:
        path = Path(path)
        arrays = {f"m/{k}": v for k, v in self.adam.m.items()}
        arrays.update({f"v/{k}": v for k, v in self.adam.v.items()})
        np.savez(path.with_suffix(".npz"), **arrays)
        meta = {
            "epoch": self.epoch, "t": self.adam.t, "lr": self.adam.lr,
            "weight_decay": self.adam.weight_decay, "rng_state": self.rng_state,
            "history": self.history, "best_oa": self.best_oa, "best_epoch": self.best_epoch,
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=1))

    @classmethod
    def load(cls, path) -> "TrainState":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        adam = AdamState(lr=meta["lr"], weight_decay=meta["weight_decay"], t=meta["t"])
        with np.load(path.with_suffix(".npz")) as z:
            for name in z.files:
                kind, key = name.split("/", 1)
                getattr(adam, kind)[key] = z[name].copy()
        return cls(adam, meta["epoch"], meta["rng_state"], meta["history"],
                   meta["best_oa"], meta["best_epoch"])


@dataclass
class TrainResult:
    model: LiteDgcnn
    best_params: dict
    best_epoch: int
    history: list
    timing: list
    final: Metrics
    state: TrainState


def _thread_limit(threads: int):
    if not threads:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def _stack(clouds, dtype) -> np.ndarray:
    return np.stack([np.asarray(c.points, dtype=dtype) for c in clouds])


def evaluate_model(model: LiteDgcnn, clouds, num_classes: int, graphs=None) -> Metrics:
    """One deterministic pass, no augmentation, fixed batch size."""
    if not clouds:
        raise UsageError("nothing to evaluate")
    if graphs is None:
        graphs = [model.build_graph(np.asarray(c.points)) for c in clouds]
    preds = []
    for start in range(0, len(clouds), EVAL_BATCH):
        chunk = clouds[start:start + EVAL_BATCH]
        logits = model.forward(_stack(chunk, model.dtype), np.stack(graphs[start:start + EVAL_BATCH]))
        preds.append(predict(logits))
    model.clear_cache()
    labels = [c.label for c in clouds]
    metrics = compute_metrics(np.concatenate(preds), labels, num_classes)
    metrics.param_count = model.param_count()
    return metrics


def _first_nonfinite(grads: dict) -> str | None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            return name
    return None


def train(config: TrainConfig, split: DatasetSplit, out_dir=None, resume=None,
          progress=None) -> TrainResult:
    """Train ``config.variant`` on ``split``; optionally write artefacts to ``out_dir``.

    Artefacts: ``metrics.csv`` (deterministic), ``timing.csv`` (wall clock),
    ``final.ckpt``, ``best.ckpt`` and ``state.json``/``state.npz``.
    """
    with _thread_limit(config.threads):
        return _train(config, split, out_dir, resume, progress)


def _train(config, split, out_dir, resume, progress):
    num_classes = split.num_classes
    variant = Variant.parse(config.variant)
    root = ndcore.Rng(config.seed)
    model = LiteDgcnn(variant, num_classes, root.spawn(), config.architecture())
    loop_rng = root.spawn()
    weights = split.class_weights if split.class_weights is not None else np.ones(num_classes)
    schedule = config.schedule()
    adam = AdamState(lr=config.lr, weight_decay=config.weight_decay)
    state = TrainState(adam, 0, loop_rng.state, [])
    timing = []
    best_params = {k: v.copy() for k, v in model.parameters().items()}

    if resume is not None:
        state = TrainState.load(Path(resume) / "state")
        model = checkpoint.load(Path(resume) / "final.ckpt", variant)
        loop_rng.state = state.rng_state
        adam = state.adam
        if (Path(resume) / "best.ckpt").exists():
            best_params = checkpoint.load(Path(resume) / "best.ckpt").parameters()

    # k-NN graphs depend only on the un-augmented coordinates (rigid shifts keep them)
    train_graphs = [model.build_graph(np.asarray(c.points)) for c in split.train]
    test_graphs = [model.build_graph(np.asarray(c.points)) for c in split.test]
    batch = config.effective_batch_size
    params = model.parameters()

    for epoch in range(state.epoch, config.epochs):
        t0 = time.perf_counter()
        adam.lr = schedule.lr_at(epoch)
        order = loop_rng.permutation(len(split.train))
        losses, seen = 0.0, 0
        for b, start in enumerate(range(0, len(order), batch)):
            idx = order[start:start + batch]
            clouds = [split.train[i] for i in idx]
            points = _stack(clouds, model.dtype)
            if config.augment and config.translate > 0:
                points = np.stack([augment_translate(p, loop_rng, config.translate) for p in points])
            labels = np.array([c.label for c in clouds])
            try:
                logits = model.forward(points, np.stack([train_graphs[i] for i in idx]))
                loss, grad = weighted_cross_entropy(logits, labels, weights)
                grads = model.backward(grad)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch} batch {b}: {exc}") from exc
            bad = _first_nonfinite(grads)
            if bad is not None:
                raise NumericalError(f"epoch {epoch} batch {b}: non-finite gradient in layer {bad.split('.')[0]}")
            adam_step(params, grads, adam)
            bad = _first_nonfinite(params)
            if bad is not None:
                raise NumericalError(f"epoch {epoch} batch {b}: update made layer {bad.split('.')[0]} non-finite")
            losses += loss * len(idx)
            seen += len(idx)
        model.clear_cache()
        test = evaluate_model(model, split.test, num_classes, test_graphs)
        elapsed = time.perf_counter() - t0
        row = {"epoch": epoch, "lr": adam.lr, "train_loss": losses / max(seen, 1),
               "test_oa": test.oa, "test_ba": test.ba}
        state.history.append(row)
        timing.append({"epoch": epoch, "epoch_time_s": elapsed})
        if test.oa > state.best_oa:
            state.best_oa, state.best_epoch = test.oa, epoch
            best_params = {k: v.copy() for k, v in params.items()}
        state.epoch = epoch + 1
        if progress is not None:
            progress(row, elapsed)
        log.info("epoch %d loss %.4f oa %.4f ba %.4f (%.2fs)", epoch, row["train_loss"], test.oa, test.ba, elapsed)

    state.rng_state = loop_rng.state
    state.adam = adam
    final = evaluate_model(model, split.test, num_classes, test_graphs) if split.test else None
    if final is not None and timing:
        final.epoch_time_s = float(np.mean([t["epoch_time_s"] for t in timing]))
    result = TrainResult(model, best_params, state.best_epoch, state.history, timing, final, state)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_csv(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_outputs(result: TrainResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # metrics.csv must be bit-reproducible, so wall-clock lives in timing.csv
    write_csv(out / "metrics.csv", result.history, METRIC_COLUMNS)
    if result.timing:
        old = read_csv(out / "timing.csv") if (out / "timing.csv").exists() else []
        keep = [r for r in old if r["epoch"] < result.timing[0]["epoch"]]
        rows = [{"epoch": int(r["epoch"]), "epoch_time_s": r["epoch_time_s"]} for r in keep] + result.timing
        write_csv(out / "timing.csv", rows, ("epoch", "epoch_time_s"))
    checkpoint.save(result.model, out / "final.ckpt")
    best = copy.deepcopy(result.model)
    for k, v in best.parameters().items():
        v[...] = result.best_params[k]
    checkpoint.save(best, out / "best.ckpt")
    result.state.save(out / "state")


def evaluate(ckpt_path, split: DatasetSplit, clouds=None, expect_variant=None) -> Metrics:
    model = checkpoint.load(ckpt_path, expect_variant)
    if model.num_classes != split.num_classes:
        from .errors import CheckpointError

        raise CheckpointError(f"checkpoint has {model.num_classes} classes, data has {split.num_classes}")
    return evaluate_model(model, split.test if clouds is None else clouds, split.num_classes)


# ----------------------------------------------------------- random search

@dataclass
class LayerRange:
    grid_size: tuple
    window_size: tuple
    stride: tuple
    smooth_init: tuple = (True, False)
    windows: tuple = WINDOW_NAMES


def default_space() -> dict[str, LayerRange]:
    """Sampling bounds for the four STFT-KAN layers of liteDGCNN."""
    return {
        "ecl1": LayerRange((1, 4), (2, 4), (1, 3)),
        "ecl2": LayerRange((1, 7), (10, 64), (5, 20)),
        "fel": LayerRange((5, 10), (20, 100), (10, 25)),
        "cl": LayerRange((5, 8), (150, 400), (8, 15)),
    }


def read_space(path) -> dict[str, LayerRange]:
    """Search-space file: ``ecl2.window_size=10-64``, ``cl.windows=hann,blackman``, ..."""
    space = default_space()
    for key, value in read_kv_file(path):
        if "." not in key:
            raise ConfigError(f"search key {key!r} must look like <layer>.<attribute>")
        stage, attr = key.split(".", 1)
        if stage not in space:
            raise ConfigError(f"unknown layer {stage!r}")
        rng_ = space[stage]
        if attr in ("grid_size", "window_size", "stride"):
            lo, _, hi = value.partition("-")
            lo, hi = int(lo), int(hi or lo)
            if lo > hi or lo < 1:
                raise ConfigError(f"{key}: bad range {value!r}")
            setattr(rng_, attr, (lo, hi))
        elif attr == "smooth_init":
            rng_.smooth_init = tuple(_parse_bool(v) for v in value.split(","))
        elif attr in ("windows", "window"):
            rng_.windows = tuple(WindowKind.parse(v).label for v in value.split(","))
        else:
            raise ConfigError(f"unknown search attribute {attr!r}")
    return space


def sample_specs(space: dict[str, LayerRange], widths: dict, rng: ndcore.Rng,
                 max_attempts: int = 100) -> dict[str, StftLayerSpec]:
    """Draw one configuration uniformly; resample layers whose window exceeds their input."""
    specs = {}
    for stage in STAGES:
        r = space[stage]
        d_in = widths[stage][0]
        for _ in range(max_attempts):
            spec = StftLayerSpec(
                grid_size=int(rng.integers(*r.grid_size)),
                window_size=int(rng.integers(*r.window_size)),
                stride=int(rng.integers(*r.stride)),
                smooth_init=bool(rng.choice(r.smooth_init)),
                window=WindowKind.parse(rng.choice(r.windows)),
            )
            if spec.window_size <= d_in and num_windows(d_in, spec.window_size, spec.stride)[0] >= 1:
                specs[stage] = spec
                break
        else:
            raise ConfigError(f"no feasible {stage} configuration after {max_attempts} draws")
    return specs


def random_search(space, trials: int, budget_epochs: int, base: TrainConfig,
                  split: DatasetSplit, seed: int = 0, progress=None) -> list[dict]:
    """Uniform random search over STFT-KAN layer settings, ranked by final test OA."""
    if trials < 1:
        raise UsageError("need at least one trial")
    rng = ndcore.Rng(seed)
    widths = base.architecture().widths(split.num_classes)
    rows = []
    for trial in range(trials):
        specs = sample_specs(space, widths, rng)
        cfg = dataclasses.replace(base, variant=Variant.STFT_KAN.label, epochs=budget_epochs, stft=specs)
        result = train(cfg, split)
        row = {"trial": trial, "test_oa": result.final.oa, "test_ba": result.final.ba,
               "param_count": result.model.param_count()}
        for stage, spec in specs.items():
            row.update({f"{stage}.grid_size": spec.grid_size, f"{stage}.window_size": spec.window_size,
                        f"{stage}.stride": spec.stride, f"{stage}.smooth_init": spec.smooth_init,
                        f"{stage}.window": spec.window.label})
        rows.append(row)
        if progress is not None:
            progress(row)
    rows.sort(key=lambda r: (-r["test_oa"], r["trial"]))
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    return rows


def search_columns() -> list[str]:
    cols = ["rank", "trial", "test_oa", "test_ba", "param_count"]
    for stage in STAGES:
        cols += [f"{stage}.{a}" for a in ("grid_size", "window_size", "stride", "smooth_init", "window")]
    return cols

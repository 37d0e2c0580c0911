"""Declarative model configurations and the train/evaluate/predict drivers.

Three fish-classifier variants share one backbone (four conv layers with a
2x2 max pool after each pair, two hidden FC layers with dropout, softmax over
8 classes) and differ in filter counts and FC widths:

* ``model1`` -- conv 4/4/8/8 (3x3), FC 96/16.
* ``model2`` -- conv 16/16 (2x2) then 32/32 (3x3), FC 96/16.
* ``model3`` -- conv 4/4/8/8 (3x3), FC 144/32.

Convolutions keep spatial size (48 -> 24 -> 12 through the pools).  2x2
kernels cannot do that with symmetric integer padding, so model2 pads its
first conv by 1 (48 -> 49) and its second by 0 (49 -> 48).  ``lenet5`` is a
shape-check config: 32x32 input, FC 120/84, 10 outputs.

Training follows k-fold cross-validation: for each fold, train on the other
folds for a fixed number of epochs with shuffled mini-batches, then score the
held fold.  Parameters carry over from fold to fold by default
(``fresh_per_fold`` re-initializes instead); momentum velocities always reset
at fold boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FISH_CLASSES, LabeledImage, SplitPlan
from .layers import (
    Conv2d,
    ConvSpec,
    Dense,
    Dropout,
    Flatten,
    MaxPool,
    Network,
    PoolSpec,
    ReLU,
    Softmax,
)
from .metrics import (
    MetricsReport,
    accuracy,
    confusion_matrix,
    logloss_gradient,
    multiclass_logloss,
)
from .optim import ParamState, SgdConfig, sgd_step

MODEL_VARIANTS = ("model1", "model2", "model3", "lenet5")


@dataclass(frozen=True)
class LayerSpec:
    """One declarative layer entry; `kind` selects which fields apply."""

    kind: str
    out_channels: int | None = None
    kernel: tuple[int, int] | None = None
    stride: int = 1
    padding: int = 0
    width: int | None = None
    p: float | None = None
    mode: str = "max"

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "conv":
            d.update(
                out_channels=self.out_channels,
                kernel=list(self.kernel),
                stride=self.stride,
                padding=self.padding,
            )
        elif self.kind == "pool":
            d["mode"] = self.mode
        elif self.kind == "fc":
            d["width"] = self.width
        elif self.kind == "dropout":
            d["p"] = self.p
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        kind = d["kind"]
        if kind == "conv":
            return cls(
                "conv",
                out_channels=int(d["out_channels"]),
                kernel=(int(d["kernel"][0]), int(d["kernel"][1])),
                stride=int(d.get("stride", 1)),
                padding=int(d.get("padding", 0)),
            )
        if kind == "pool":
            return cls("pool", mode=d.get("mode", "max"))
        if kind == "fc":
            return cls("fc", width=int(d["width"]))
        if kind == "dropout":
            return cls("dropout", p=float(d["p"]))
        if kind in ("relu", "flatten", "softmax"):
            return cls(kind)
        raise ValueError(f"unknown layer kind: {kind!r}")


def conv(out_channels: int, k: int, padding: int, stride: int = 1) -> LayerSpec:
    return LayerSpec(
        "conv", out_channels=out_channels, kernel=(k, k), stride=stride, padding=padding
    )


def fc(width: int) -> LayerSpec:
    return LayerSpec("fc", width=width)


@dataclass
class ModelConfig:
    name: str
    input_shape: tuple[int, int, int]
    layers: list[LayerSpec]
    class_names: tuple[str, ...] = FISH_CLASSES

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "class_names": list(self.class_names),
            "layers": [spec.to_dict() for spec in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            name=d["name"],
            input_shape=tuple(int(v) for v in d["input_shape"]),
            layers=[LayerSpec.from_dict(s) for s in d["layers"]],
            class_names=tuple(d["class_names"]),
        )


def _fish_config(
    name: str,
    conv_layers: list[LayerSpec],
    fc1: int,
    fc2: int,
    dropout_p: float,
    input_hw: int,
) -> ModelConfig:
    body: list[LayerSpec] = []
    for i, spec in enumerate(conv_layers):
        body.append(spec)
        body.append(LayerSpec("relu"))
        if i % 2 == 1:
            body.append(LayerSpec("pool"))
    head = [
        LayerSpec("flatten"),
        fc(fc1),
        LayerSpec("relu"),
        LayerSpec("dropout", p=dropout_p),
        fc(fc2),
        LayerSpec("relu"),
        LayerSpec("dropout", p=dropout_p),
        fc(len(FISH_CLASSES)),
        LayerSpec("softmax"),
    ]
    return ModelConfig(name, (3, input_hw, input_hw), body + head)


def model_config(
    variant: str, input_hw: int | None = None, dropout_p: float = 0.5
) -> ModelConfig:
    """Named architecture for a variant; `input_hw` shrinks the spatial size."""
    if variant == "model1":
        convs = [conv(4, 3, 1), conv(4, 3, 1), conv(8, 3, 1), conv(8, 3, 1)]
        return _fish_config("model1", convs, 96, 16, dropout_p, input_hw or 48)
    if variant == "model2":
        convs = [conv(16, 2, 1), conv(16, 2, 0), conv(32, 3, 1), conv(32, 3, 1)]
        return _fish_config("model2", convs, 96, 16, dropout_p, input_hw or 48)
    if variant == "model3":
        convs = [conv(4, 3, 1), conv(4, 3, 1), conv(8, 3, 1), conv(8, 3, 1)]
        return _fish_config("model3", convs, 144, 32, dropout_p, input_hw or 48)
    if variant == "lenet5":
        hw = input_hw or 32
        layers = [
            conv(6, 5, 0),
            LayerSpec("relu"),
            LayerSpec("pool"),
            conv(16, 5, 0),
            LayerSpec("relu"),
            LayerSpec("pool"),
            LayerSpec("flatten"),
            fc(120),
            LayerSpec("relu"),
            fc(84),
            LayerSpec("relu"),
            fc(10),
            LayerSpec("softmax"),
        ]
        return ModelConfig(
            "lenet5", (3, hw, hw), layers, tuple(f"digit_{i}" for i in range(10))
        )
    raise ValueError(f"unknown model variant: {variant!r}")


def build_network(config: ModelConfig, seed) -> Network:
    """Instantiate and He-initialize a network; validates the full shape chain."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_ss, drop_ss = ss.spawn(2)
    rng_init = np.random.default_rng(init_ss)
    rng_drop = np.random.default_rng(drop_ss)
    last_fc = max(
        (i for i, s in enumerate(config.layers) if s.kind == "fc"), default=-1
    )
    layers = []
    shape = tuple(config.input_shape)
    for i, spec in enumerate(config.layers):
        if spec.kind == "conv":
            layer = Conv2d(
                shape[0],
                ConvSpec(spec.out_channels, spec.kernel, spec.stride, spec.padding),
                rng_init,
            )
        elif spec.kind == "relu":
            layer = ReLU()
        elif spec.kind == "pool":
            layer = MaxPool(PoolSpec(mode=spec.mode))
        elif spec.kind == "flatten":
            layer = Flatten()
        elif spec.kind == "fc":
            layer = Dense(shape[0], spec.width, rng_init, output_layer=(i == last_fc))
        elif spec.kind == "dropout":
            layer = Dropout(spec.p, rng_drop)
        elif spec.kind == "softmax":
            layer = Softmax()
        else:
            raise ValueError(f"unknown layer kind: {spec.kind!r}")
        shape = layer.output_shape(shape)
        layers.append(layer)
    return Network(layers, config.input_shape)


def build_model(variant: str, seed: int = 0) -> tuple[Network, ParamState]:
    """Build a named variant and its optimizer state."""
    network = build_network(model_config(variant), seed)
    return network, ParamState(network.params())


def count_parameters(network: Network) -> int:
    return sum(p.size for p in network.params())


@dataclass
class TrainedModel:
    config: ModelConfig
    network: Network
    seed: int
    flags: dict = field(default_factory=dict)


@dataclass
class FoldRecord:
    fold: int
    train_logloss: list[float]
    val_logloss: float


@dataclass
class TrainReport:
    variant: str
    seed: int
    sgd: dict
    flags: dict
    folds: list[FoldRecord]
    holdout: MetricsReport | None
    train_logloss_last: float
    train_logloss_best: float
    train_logloss_fold_mean: float

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "variant": self.variant,
            "seed": self.seed,
            "sgd": self.sgd,
            "flags": self.flags,
            "folds": [
                {
                    "fold": f.fold,
                    "train_logloss": f.train_logloss,
                    "val_logloss": f.val_logloss,
                }
                for f in self.folds
            ],
            "holdout": self.holdout.to_json_dict() if self.holdout else None,
            "train_logloss": {
                "last_epoch": self.train_logloss_last,
                "best_epoch": self.train_logloss_best,
                "fold_mean": self.train_logloss_fold_mean,
            },
        }


def _stack(entries: list[LabeledImage], idx) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([entries[i].pixels for i in idx])
    y = np.array([entries[i].label for i in idx], dtype=np.int64)
    return x, y


def _forward_probs(network: Network, images: np.ndarray, chunk: int = 256) -> np.ndarray:
    if images.shape[0] == 0:
        return np.zeros((0, network.output_shape[0]))
    parts = [
        network.forward(images[i : i + chunk], training=False)
        for i in range(0, images.shape[0], chunk)
    ]
    return np.concatenate(parts, axis=0)


def predict(model: TrainedModel | Network, images: np.ndarray) -> np.ndarray:
    """Probability rows for a batch of preprocessed C*H*W images."""
    network = model.network if isinstance(model, TrainedModel) else model
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or tuple(images.shape[1:]) != network.input_shape:
        raise ValueError(
            f"expected images of shape (N, {', '.join(map(str, network.input_shape))}), "
            f"got {tuple(images.shape)}"
        )
    return _forward_probs(network, images)


def evaluate(model: TrainedModel | Network, dataset: list[LabeledImage]) -> MetricsReport:
    """Eval-mode logloss, accuracy, and confusion matrix over a labeled set."""
    network = model.network if isinstance(model, TrainedModel) else model
    class_names = (
        model.config.class_names if isinstance(model, TrainedModel) else FISH_CLASSES
    )
    n_classes = network.output_shape[0]
    images, labels = _stack(dataset, range(len(dataset)))
    probs = _forward_probs(network, images)
    preds = probs.argmax(axis=1)
    return MetricsReport(
        logloss=multiclass_logloss(probs, labels),
        accuracy=accuracy(labels, preds),
        confusion=confusion_matrix(labels, preds, n_classes),
        class_names=tuple(class_names)[:n_classes],
    )


def train(
    variant: str | ModelConfig,
    dataset: list[LabeledImage],
    cfg: SgdConfig = SgdConfig(),
    plan: SplitPlan | None = None,
    seed: int = 0,
    fresh_per_fold: bool = False,
    dropout_p: float = 0.5,
) -> tuple[TrainedModel, TrainReport]:
    """k-fold training per the standard protocol; returns the model and report.

    For each fold: train on the remaining folds for ``cfg.epochs_per_fold``
    epochs with shuffled mini-batches, then score the held fold in eval mode.
    The last incomplete mini-batch keeps its natural size.
    """
    if plan is None or not plan.entries:
        raise ValueError("dataset has not been split; build a SplitPlan first")
    config = variant if isinstance(variant, ModelConfig) else model_config(
        variant, dropout_p=dropout_p
    )

    by_id: dict[str, LabeledImage] = {img.source_id: img for img in dataset}
    missing = [sid for sid in plan.entries if sid not in by_id]
    if missing:
        raise ValueError(f"split plan references unknown source ids: {missing[:3]}...")
    entries = [by_id[sid] for sid in plan.entries]
    folds = np.asarray(plan.folds)

    root_ss = np.random.SeedSequence(seed)
    net_ss, shuffle_ss = root_ss.spawn(2)
    network = build_network(config, net_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)

    fold_records: list[FoldRecord] = []
    for fold in range(plan.k):
        if fresh_per_fold and fold > 0:
            network = build_network(config, np.random.SeedSequence([seed, fold]))
        state = ParamState(network.params())
        train_idx = np.flatnonzero(folds != fold)
        val_idx = np.flatnonzero(folds == fold)
        epoch_losses: list[float] = []
        for _epoch in range(cfg.epochs_per_fold):
            order = shuffle_rng.permutation(train_idx.size)
            nll_sum = 0.0
            seen = 0
            for start in range(0, train_idx.size, cfg.batch_size):
                sel = train_idx[order[start : start + cfg.batch_size]]
                x, y = _stack(entries, sel)
                probs = network.forward(x, training=True)
                loss = multiclass_logloss(probs, y)
                grads = network.backward(logloss_gradient(probs, y))
                sgd_step(state, grads, cfg)
                nll_sum += loss * sel.size
                seen += sel.size
            epoch_losses.append(nll_sum / seen)
        val_report = evaluate(network, [entries[i] for i in val_idx])
        fold_records.append(FoldRecord(fold, epoch_losses, val_report.logloss))

    holdout_entries = [
        by_id[sid]
        for name in plan.class_names
        for sid in plan.holdout_ids.get(name, [])
    ]
    flags = {
        "fresh_per_fold": fresh_per_fold,
        "decay_biases": True,
        "dropout_p": dropout_p if not isinstance(variant, ModelConfig) else None,
    }
    model = TrainedModel(config, network, seed, flags)
    holdout_report = evaluate(model, holdout_entries) if holdout_entries else None

    all_epochs = [loss for rec in fold_records for loss in rec.train_logloss]
    report = TrainReport(
        variant=config.name,
        seed=seed,
        sgd={
            "lr": cfg.lr,
            "momentum": cfg.momentum,
            "weight_decay": cfg.weight_decay,
            "batch_size": cfg.batch_size,
            "epochs_per_fold": cfg.epochs_per_fold,
        },
        flags=flags,
        folds=fold_records,
        holdout=holdout_report,
        train_logloss_last=fold_records[-1].train_logloss[-1],
        train_logloss_best=min(all_epochs),
        train_logloss_fold_mean=float(
            np.mean([rec.train_logloss[-1] for rec in fold_records])
        ),
    )
    return model, report

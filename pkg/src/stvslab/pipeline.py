"""Model-agnostic train / score helpers shared by the CLI stages."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines, lstm
from .core import (Dataset, NormStats, apply_normalizer, fit_normalizer, normalize_array,
                   split_dataset, window_dataset)
from .errors import CheckpointError, MissingLabelError, ShapeError
from .metrics import evaluate_scores

MODEL_KINDS = ("lstm", "dt", "svm")
DEFAULT_TRAIN_FRACTION = 0.8


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Prepared:
    train: Dataset
    test: Dataset
    stats: NormStats


def prepare(ds: Dataset, otw_steps: int, split_seed: int,
            train_fraction: float = DEFAULT_TRAIN_FRACTION) -> Prepared:
    """Split, fit min-max on the training side only, normalize, then window."""
    missing = [i.id for i in ds if i.label is None]
    if missing:
        raise MissingLabelError(
            f"{len(missing)} instances lack labels (first: {missing[0]}); run the label stage first")
    train, test = split_dataset(ds, train_fraction, split_seed)
    stats = fit_normalizer(train)
    train = window_dataset(apply_normalizer(train, stats), otw_steps)
    test = window_dataset(apply_normalizer(test, stats), otw_steps)
    return Prepared(train, test, stats)


def train_model(kind: str, prep: Prepared, *, seed: int = 0, train_cfg: lstm.TrainConfig | None = None,
                max_depth: int = 8, min_leaf: int = 5, lam: float = 1e-4, svm_epochs: int = 50,
                log=None):
    """Train one model; returns ``(model_payload, history_rows, config_echo)``."""
    if kind == "lstm":
        cfg = train_cfg or lstm.TrainConfig(seed=seed)
        model, hist = lstm.train(prep.train, prep.test, cfg, log=log)
        return lstm.model_to_dict(model), hist.to_rows(), cfg.to_dict()
    otw = prep.train.m
    X, y = baselines.flatten_dataset(prep.train, otw)
    Xt, yt = baselines.flatten_dataset(prep.test, otw)
    if kind == "dt":
        tree = baselines.train_cart((X, y), max_depth=max_depth, min_leaf=min_leaf, seed=seed)
        acc = _accuracy(baselines.cart_scores(tree, Xt), yt)
        loss = _misclass(baselines.cart_scores(tree, X), y)
        return tree.to_dict(), [(1, loss, acc)], {"max_depth": max_depth, "min_leaf": min_leaf, "seed": seed}
    if kind == "svm":
        svm = baselines.train_svm((X, y), lam=lam, epochs=svm_epochs, seed=seed)
        acc = _accuracy(baselines.svm_scores(svm, Xt), yt)
        obj = baselines.svm_objective(svm, X, y)
        return svm.to_dict(), [(svm_epochs, obj, acc)], {"lam": lam, "epochs": svm_epochs, "seed": seed}
    raise ValueError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


def _accuracy(scores, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(np.where(scores > 0.5, 0, 1) == y))


def _misclass(scores, y) -> float:
    return 1.0 - _accuracy(scores, y)


class LoadedModel:
    """A checkpoint ready for inference on raw (un-normalized) series."""

    def __init__(self, payload: dict, name: str = ""):
        self.payload = payload
        self.kind = payload["kind"]
        self.otw_steps = int(payload["otw_steps"])
        self.name = name or self.kind
        ns = payload.get("norm_stats")
        self.stats = NormStats.from_dict(ns) if ns else None
        body = payload["model"]
        if self.kind == "lstm":
            self.model = lstm.model_from_dict(body)
            self.n_channels = self.model.input_dim
        elif self.kind == "dt":
            self.model = baselines.CartTree.from_dict(body)
            self.n_channels = self.model.n_features // self.otw_steps
        elif self.kind == "svm":
            self.model = baselines.LinearSvm.from_dict(body)
            self.n_channels = self.model.weights.shape[0] // self.otw_steps
        else:
            raise CheckpointError(f"unknown model kind {self.kind!r}")

    @classmethod
    def from_file(cls, path: str | Path) -> "LoadedModel":
        return cls(lstm.load_checkpoint(path), name=Path(path).stem)

    @property
    def variable_length(self) -> bool:
        return self.kind == "lstm"

    def check_dataset(self, ds: Dataset):
        if ds.n_channels != self.n_channels:
            raise ShapeError(
                f"checkpoint {self.name!r} expects {self.n_channels} channels, dataset has {ds.n_channels}")
        if ds.m < self.otw_steps:
            raise ShapeError(
                f"checkpoint {self.name!r} needs {self.otw_steps} steps, dataset has {ds.m}")

    def normalize(self, X: np.ndarray) -> np.ndarray:
        return normalize_array(X, self.stats) if self.stats is not None else X

    def scores_normalized(self, Xn: np.ndarray) -> np.ndarray:
        """P(Stable) for already-normalized windows of shape ``(n, steps, d)``."""
        if self.kind == "lstm":
            return lstm.predict_proba(self.model, Xn)[:, 0]
        if Xn.shape[1] != self.otw_steps:
            raise ShapeError(f"{self.kind} checkpoint needs windows of exactly {self.otw_steps} steps")
        flat = Xn.reshape(len(Xn), -1)
        if self.kind == "dt":
            return baselines.cart_scores(self.model, flat)
        return baselines.svm_scores(self.model, flat)

    def scores(self, X: np.ndarray, steps: int | None = None) -> np.ndarray:
        steps = self.otw_steps if steps is None else steps
        return self.scores_normalized(self.normalize(np.asarray(X)[:, :steps]))


def evaluation_partition(ckpt: LoadedModel, ds: Dataset, partition: str = "test") -> Dataset:
    if partition == "all":
        return ds
    split = ckpt.payload.get("split") or {}
    train, test = split_dataset(ds, split.get("train_fraction", DEFAULT_TRAIN_FRACTION),
                                split.get("seed", 0))
    if partition == "train":
        return train
    if partition == "test":
        return test
    raise ValueError(f"unknown partition {partition!r}")


def evaluate_checkpoint(ckpt: LoadedModel, ds: Dataset, partition: str = "test",
                        model_label: str | None = None):
    ckpt.check_dataset(ds)
    part = evaluation_partition(ckpt, ds, partition)
    y = part.label_indices()
    s = ckpt.scores(part.series_array())
    return evaluate_scores(model_label or ckpt.kind, ckpt.otw_steps, s, y)

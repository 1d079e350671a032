"""Training loop, contiguous k-fold cross-validation and label-noise experiments."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import network
from .motion_image import ScalingSpec, encode, fit_scaling
from .network import NetworkConfig
from .optimizer import AdamHyper, AdamState, adam_step

log = logging.getLogger(__name__)

REPORT_SCHEMA = "motionseg.report/1"


@dataclass
class FoldSpec:
    k: int
    assignments: np.ndarray  # fold id per sequence index

    def test_indices(self, fold: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.assignments == fold)]

    def train_indices(self, fold: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.assignments != fold)]


@dataclass(frozen=True)
class NoiseSpec:
    p: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"noise level must lie in [0, 1], got {self.p}")


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    losses: list[float]
    scaling: ScalingSpec
    state: AdamState


@dataclass
class TrainReport:
    fold: int
    train_accuracy: float
    test_accuracy: float
    train_correct: int
    train_frames: int
    test_correct: int
    test_frames: int
    losses: list[float]
    config: dict
    seed: int
    noise_p: float = 0.0
    test_indices: list[int] = field(default_factory=list)

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["type"] = "fold"
        rec["config_digest"] = config_digest(self.config)
        return rec


def config_digest(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def make_folds(n: int, k: int) -> FoldSpec:
    if not 1 <= k <= n:
        raise ValueError(f"fold count must lie in [1, {n}], got {k}")
    base, extra = divmod(n, k)
    sizes = [base + 1 if i < extra else base for i in range(k)]
    return FoldSpec(k, np.repeat(np.arange(k), sizes))


def inject_noise(labels, spec: NoiseSpec, K: int) -> np.ndarray:
    """Replace each label with probability ``p`` by a uniformly drawn *different* class."""
    if K < 2:
        raise ValueError("need K >= 2 to corrupt labels")
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    flip = rng.random(labels.size) < spec.p
    # offset in 1..K-1 skips the true class
    shift = rng.integers(1, K, size=labels.size)
    return np.where(flip, (labels + shift) % K, labels)


def frame_accuracy(pred, truth) -> float:
    correct, total = _count_correct(pred, truth)
    if total == 0:
        raise ValueError("no frames to score")
    return correct / total


def _as_batch(x):
    if isinstance(x, np.ndarray) and x.ndim == 1:
        return [x]
    if len(x) and np.ndim(x[0]) == 0:
        return [np.asarray(x)]
    return list(x)


def _count_correct(pred, truth) -> tuple[int, int]:
    pred, truth = _as_batch(pred), _as_batch(truth)
    if len(pred) != len(truth):
        raise ValueError(f"{len(pred)} predicted sequences vs {len(truth)} true")
    correct = total = 0
    for p, t in zip(pred, truth):
        p, t = np.asarray(p), np.asarray(t)
        if p.shape != t.shape:
            raise ValueError(f"length mismatch: {p.size} predicted vs {t.size} true frames")
        correct += int((p == t).sum())
        total += t.size
    return correct, total


def _images(sequences, scaling):
    return [encode(s.motion, scaling).flat() for s in sequences]


def train_one(
    config: NetworkConfig,
    hyper: AdamHyper,
    train_set,
    epochs: int,
    seed: int,
    labels=None,
    scaling: ScalingSpec | None = None,
    params=None,
    state: AdamState | None = None,
) -> TrainResult:
    """Train on ``train_set`` with one Adam step per sequence.

    ``labels`` overrides the sequences' own labels (used for noisy training).
    Scaling is fitted on ``train_set`` unless given. Passing ``params`` and
    ``state`` continues from an earlier run.
    """
    train_set = list(train_set)
    if not train_set:
        raise ValueError("training set is empty")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if scaling is None:
        scaling = fit_scaling([s.motion for s in train_set])
    if labels is None:
        labels = [s.labels for s in train_set]
    images = _images(train_set, scaling)

    if params is None:
        params = network.init_params(config, seed)
    if state is None:
        state = AdamState.zeros_like(params)
    rng = np.random.default_rng([seed, 1])

    losses = []
    for epoch in range(epochs):
        total = 0.0
        for i in rng.permutation(len(images)):
            value, grads = network.loss_and_gradients(params, images[i], labels[i], config)
            params, state = adam_step(params, grads, state, hyper)
            total += value
        losses.append(total / len(images))
        log.debug("epoch %d loss %.6f", epoch + 1, losses[-1])
    return TrainResult(params, losses, scaling, state)


def evaluate(params, config, sequences, scaling, labels=None) -> tuple[int, int]:
    """(correct, total) frames over ``sequences``."""
    if labels is None:
        labels = [s.labels for s in sequences]
    preds = [network.predict(params, x, config) for x in _images(sequences, scaling)]
    return _count_correct(preds, labels)


def _run_fold(i, config, hyper, dataset, folds, epochs, noise, seed):
    train_idx = folds.train_indices(i)
    test_idx = folds.test_indices(i)
    if not train_idx:
        raise ValueError(f"fold {i} leaves an empty training set")
    train = [dataset[j] for j in train_idx]
    test = [dataset[j] for j in test_idx]
    if noise is not None:
        # each sequence's corruption depends only on its dataset index
        train_labels = [
            inject_noise(dataset[j].labels, NoiseSpec(noise.p, hash_seed(noise.seed, j)), config.K)
            for j in train_idx
        ]
    else:
        train_labels = None
    fold_seed = seed + i
    result = train_one(config, hyper, train, epochs, fold_seed, labels=train_labels)
    tr_c, tr_n = evaluate(result.params, config, train, result.scaling)
    te_c, te_n = evaluate(result.params, config, test, result.scaling)
    log.info("fold %d: train %.4f test %.4f", i, tr_c / tr_n, te_c / te_n)
    return TrainReport(
        fold=i,
        train_accuracy=tr_c / tr_n,
        test_accuracy=te_c / te_n,
        train_correct=tr_c,
        train_frames=tr_n,
        test_correct=te_c,
        test_frames=te_n,
        losses=result.losses,
        config=config.to_dict(),
        seed=fold_seed,
        noise_p=noise.p if noise is not None else 0.0,
        test_indices=test_idx,
    )


def hash_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def cross_validate(
    config: NetworkConfig,
    hyper: AdamHyper,
    dataset,
    folds: FoldSpec,
    epochs: int,
    noise: NoiseSpec | None = None,
    seed: int = 0,
    workers: int = 1,
) -> list[TrainReport]:
    """Train on k-1 folds, score the held-out fold against its true labels.

    Training accuracy is scored against clean labels even when ``noise``
    corrupts the labels used for training.
    """
    dataset = list(dataset)
    if len(folds.assignments) != len(dataset):
        raise ValueError(f"fold spec covers {len(folds.assignments)} sequences, dataset has {len(dataset)}")
    args = (config, hyper, dataset, folds, epochs, noise, seed)
    if workers <= 1:
        return [_run_fold(i, *args) for i in range(folds.k)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_fold, i, *args) for i in range(folds.k)]
        return [f.result() for f in futures]


def pooled(reports) -> dict:
    tr_c = sum(r.train_correct for r in reports)
    tr_n = sum(r.train_frames for r in reports)
    te_c = sum(r.test_correct for r in reports)
    te_n = sum(r.test_frames for r in reports)
    return {
        "train_accuracy": tr_c / tr_n,
        "test_accuracy": te_c / te_n,
        "mean_fold_test_accuracy": float(np.mean([r.test_accuracy for r in reports])),
    }


def write_report(path, reports, flags: dict, command: str = "crossval") -> None:
    records = [{"type": "header", "schema": REPORT_SCHEMA, "command": command, "flags": flags}]
    records += [r.to_record() for r in reports]
    records.append({"type": "summary", **pooled(reports)})
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")

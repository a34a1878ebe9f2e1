"""Two-stage training pipeline.

Identification: fit a logistic-regression identifier on the raw training
set and split it at a confidence threshold; initialize one feedforward
classifier per subset. Refinement: per batch, the low-confidence classifier
takes a few optimizer steps against pseudo-labels from the high-confidence
classifier, its best step is blended back into the high-confidence weights,
the high-confidence classifier (and the noise wrapper, when enabled) takes
a gradient step on ground truth, and the low-confidence classifier rolls
back to its initialization snapshot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .confidence import split_by_confidence
from .data import Dataset
from .errors import ConfigError, DataError, NumericError, ReckonerError
from .metrics import accuracy, demographic_parity, equalized_odds, largest_pair
from .models import (
    AdamState,
    FeedForwardClassifier,
    LinearClassifier,
    ModelParams,
    NoiseWrapper,
    adam_step,
    bce,
    blend,
    lr_fit,
    predict_labels,
)
from .serial import sha256_of_obj

StepHook = Callable[[int, np.ndarray], None]


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of the two-stage trainer, serialized with each report."""

    alpha: float = 0.9
    learning_rate: float = 0.001
    total_iterations: int = 2000
    init_fraction: float = 0.10
    pseudo_iters: int = 3
    confidence_threshold: float = 0.6
    batch_size: int = 128
    hidden1: int = 64
    hidden2: int = 32
    noise_hidden: int | None = None
    seed: int = 0
    use_noise: bool = True
    use_pseudo_learning: bool = True
    low_conf_sees_noise: bool = False
    pseudo_label_kind: str = "hard"
    pseudo_cadence: str = "batch"
    identifier_epochs: int = 300
    identifier_lr: float = 0.05

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha <= 1.0):
            raise ConfigError("alpha must lie in [0, 1]")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0.0 < self.init_fraction < 1.0):
            raise ConfigError("init_fraction must lie in (0, 1)")
        if self.pseudo_iters < 1:
            raise ConfigError("pseudo_iters must be >= 1")
        if not (0.5 <= self.confidence_threshold < 1.0):
            raise ConfigError("confidence_threshold must lie in [0.5, 1)")
        for name in ("total_iterations", "batch_size", "hidden1", "hidden2",
                     "identifier_epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive count")
        if self.noise_hidden is not None and self.noise_hidden < 1:
            raise ConfigError("noise_hidden must be a positive count")
        if self.pseudo_label_kind not in ("hard", "soft"):
            raise ConfigError("pseudo_label_kind must be 'hard' or 'soft'")
        if self.pseudo_cadence not in ("batch", "epoch"):
            raise ConfigError("pseudo_cadence must be 'batch' or 'epoch'")
        if self.identifier_lr <= 0:
            raise ConfigError("identifier_lr must be positive")

    @property
    def init_steps(self) -> int:
        return int(self.init_fraction * self.total_iterations)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "learning_rate": self.learning_rate,
            "total_iterations": self.total_iterations,
            "init_fraction": self.init_fraction,
            "pseudo_iters": self.pseudo_iters,
            "confidence_threshold": self.confidence_threshold,
            "batch_size": self.batch_size,
            "hidden1": self.hidden1,
            "hidden2": self.hidden2,
            "noise_hidden": self.noise_hidden,
            "seed": self.seed,
            "use_noise": self.use_noise,
            "use_pseudo_learning": self.use_pseudo_learning,
            "low_conf_sees_noise": self.low_conf_sees_noise,
            "pseudo_label_kind": self.pseudo_label_kind,
            "pseudo_cadence": self.pseudo_cadence,
            "identifier_epochs": self.identifier_epochs,
            "identifier_lr": self.identifier_lr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        try:
            return cls(**known)
        except TypeError as exc:
            raise ConfigError(f"malformed train config: {exc}") from exc

    def config_hash(self) -> str:
        return sha256_of_obj(self.to_dict())


@dataclass(frozen=True)
class PseudoLearnState:
    """Outcome of one pseudo-learning cycle of the low-confidence classifier."""

    low_snapshot: ModelParams
    k: int
    best_low: ModelParams
    losses: tuple[float, ...]


class _BatchStream:
    """Seeded infinite mini-batch index stream; reshuffles every epoch."""

    def __init__(self, n: int, batch_size: int, seed: int):
        if n < 1:
            raise DataError("cannot stream batches from an empty dataset")
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = np.random.default_rng(seed)
        self._queue: list[np.ndarray] = []

    def __iter__(self):
        return self

    def __next__(self) -> np.ndarray:
        if not self._queue:
            perm = self.rng.permutation(self.n)
            self._queue = [
                perm[i : i + self.batch_size]
                for i in range(0, self.n, self.batch_size)
            ]
        return self._queue.pop(0)


# Deterministic sub-seed roles derived from TrainConfig.seed. The ERM
# baseline reuses the same offsets so that the flag-disabled pipeline and
# the plain trainer consume identical random streams.
_SEED_HIGH_INIT = 1
_SEED_LOW_INIT = 2
_SEED_NOISE = 3
_SEED_STREAM_HIGH = 4
_SEED_STREAM_LOW = 5
_SEED_STREAM_REFINE = 6


class ReckonerModel:
    """Dual classifiers plus noise wrapper and their optimizer states.

    Prediction uses the high-confidence classifier only.
    """

    def __init__(self, high: FeedForwardClassifier, low: FeedForwardClassifier,
                 noise: NoiseWrapper, identifier: LinearClassifier,
                 config: TrainConfig, low_snapshot: ModelParams):
        self.high = high
        self.low = low
        self.noise = noise
        self.identifier = identifier
        self.config = config
        self.low_snapshot = low_snapshot
        lr = config.learning_rate
        self.high_state = AdamState.zeros(high.params.layout.size, lr=lr)
        self.low_state = AdamState.zeros(low.params.layout.size, lr=lr)
        self.noise_state = AdamState.zeros(noise.params.layout.size, lr=lr)
        self.high_step_count = 0
        self.history: list[dict] = []

    @property
    def m(self) -> int:
        return self.high.m

    def high_input(self, x: np.ndarray) -> np.ndarray:
        return self.noise.apply(x) if self.config.use_noise else np.asarray(x, float)

    def low_input(self, x: np.ndarray) -> np.ndarray:
        if self.config.low_conf_sees_noise:
            return self.noise.apply(x)
        return np.asarray(x, dtype=np.float64)


def _init_phase(model: FeedForwardClassifier, state: AdamState, d: Dataset,
                steps: int, batch_size: int, stream_seed: int,
                on_step: StepHook | None = None, step_base: int = 0) -> int:
    """Plain supervised Adam training on raw inputs; returns steps taken."""
    if steps == 0:
        return 0
    stream = _BatchStream(d.n, batch_size, stream_seed)
    y = d.y.astype(np.float64)
    for i in range(steps):
        idx = next(stream)
        grad = model.backward(d.x[idx], y[idx])
        adam_step(model.params, grad, state)
        if on_step is not None:
            on_step(step_base + i, model.params.values.copy())
    return steps


def initialize(train: Dataset, cfg: TrainConfig, *,
               init_override: Dataset | None = None,
               on_high_step: StepHook | None = None) -> ReckonerModel:
    """Identification stage plus per-subset initialization of both classifiers.

    ``init_override`` replaces the high-confidence subset as the high
    classifier's initialization data; it exists so the ERM comparison can
    share the exact training trajectory, and is not part of the standard
    two-stage flow.
    """
    if train.n == 0:
        raise DataError("training set is empty")
    m = train.m
    identifier = lr_fit(train, epochs=cfg.identifier_epochs,
                        learning_rate=cfg.identifier_lr, seed=cfg.seed)
    split = split_by_confidence(train, identifier, cfg.confidence_threshold)
    if split.high_empty or split.low_empty:
        which = "high" if split.high_empty else "low"
        raise DataError(
            f"confidence split left the {which}-confidence subset empty at "
            f"threshold {cfg.confidence_threshold}; lower the threshold or "
            f"inspect the identifier fit"
        )
    high_init = train.take(split.high) if init_override is None else init_override
    low_init = train.take(split.low)

    high = FeedForwardClassifier.initialized(m, cfg.hidden1, cfg.hidden2,
                                             cfg.seed + _SEED_HIGH_INIT)
    low = FeedForwardClassifier.initialized(m, cfg.hidden1, cfg.hidden2,
                                            cfg.seed + _SEED_LOW_INIT)
    noise_hidden = cfg.noise_hidden if cfg.noise_hidden is not None else m
    noise = NoiseWrapper.initialized(m, noise_hidden, cfg.seed + _SEED_NOISE)

    model = ReckonerModel(high, low, noise, identifier, cfg, low.params.snapshot())
    steps = cfg.init_steps
    model.high_step_count += _init_phase(
        high, model.high_state, high_init, steps, cfg.batch_size,
        cfg.seed + _SEED_STREAM_HIGH, on_high_step, step_base=0,
    )
    _init_phase(low, model.low_state, low_init, steps, cfg.batch_size,
                cfg.seed + _SEED_STREAM_LOW)
    # Pseudo-learning cycles start from this exact state: snapshot the
    # initialized low classifier and zero its optimizer.
    model.low_snapshot = low.params.snapshot()
    model.low_state.reset()
    return model


def pseudo_learning_cycle(model: ReckonerModel, x: np.ndarray) -> PseudoLearnState:
    """Train the low-confidence classifier on high-confidence pseudo-labels.

    Ground-truth labels are not an input. The cycle assumes the low
    classifier sits at its snapshot (the rollback invariant) and leaves it
    at the final step's parameters; the caller rolls it back.
    """
    cfg = model.config
    x = np.asarray(x, dtype=np.float64)
    p_high = model.high.score(model.high_input(x))
    if cfg.pseudo_label_kind == "hard":
        y_tilde = predict_labels(p_high).astype(np.float64)
    else:
        y_tilde = np.asarray(p_high, dtype=np.float64)
    x_low = model.low_input(x)
    losses: list[float] = []
    best_loss = math.inf
    best_k = 1
    best_params: ModelParams | None = None
    for step in range(1, cfg.pseudo_iters + 1):
        grad = model.low.backward(x_low, y_tilde)
        adam_step(model.low.params, grad, model.low_state)
        loss = bce(model.low.score(x_low), y_tilde)
        if not np.isfinite(loss):
            raise NumericError("non-finite pseudo-learning loss")
        losses.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_k = step
            best_params = model.low.params.snapshot()
    assert best_params is not None
    return PseudoLearnState(
        low_snapshot=model.low_snapshot,
        k=best_k,
        best_low=best_params,
        losses=tuple(losses),
    )


def knowledge_share(high: ModelParams, best_low: ModelParams, alpha: float) -> ModelParams:
    """Convex blend of high-confidence and best pseudo-learned low weights."""
    return blend(high, best_low, alpha)


def refinement_step(model: ReckonerModel, x: np.ndarray, y: np.ndarray,
                    run_pseudo: bool | None = None) -> dict:
    """One refinement iteration on a batch.

    Order: pseudo-learning and knowledge sharing form the temporary weights,
    the high classifier (and noise wrapper) take one Adam step on ground
    truth from there, then the low classifier rolls back to its snapshot
    with a fresh optimizer.
    """
    cfg = model.config
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] == 0:
        raise DataError("empty batch")
    if run_pseudo is None:
        run_pseudo = cfg.use_pseudo_learning
    log: dict = {}
    if run_pseudo:
        state = pseudo_learning_cycle(model, x)
        blended = knowledge_share(model.high.params, state.best_low, cfg.alpha)
        model.high.params.restore(blended)
        log["k"] = state.k
        log["pseudo_loss"] = state.losses[state.k - 1]

    x_in = model.high_input(x)
    loss = bce(model.high.score(x_in), y)
    if not np.isfinite(loss):
        raise NumericError("non-finite refinement loss")
    if cfg.use_noise:
        grad_high, d_input = model.high.backward(x_in, y, return_input_grad=True)
        grad_noise = model.noise.backward(d_input)
        adam_step(model.high.params, grad_high, model.high_state)
        adam_step(model.noise.params, grad_noise, model.noise_state)
    else:
        grad_high = model.high.backward(x_in, y)
        adam_step(model.high.params, grad_high, model.high_state)
    model.high_step_count += 1

    if run_pseudo:
        model.low.params.restore(model.low_snapshot)
        model.low_state.reset()
    log["loss"] = loss
    return log


def _validation_entry(model: ReckonerModel, valid: Dataset) -> dict:
    preds, _ = predict(model, valid.x)
    entry: dict = {"valid_accuracy": accuracy(preds, valid.y)}
    try:
        g_i, g_j = largest_pair(valid.s)
        entry["valid_dp"] = demographic_parity(preds, valid.s, g_i, g_j)
        entry["valid_eodds"] = equalized_odds(preds, valid.y, valid.s, g_i, g_j)
    except ReckonerError:
        entry["valid_dp"] = None
        entry["valid_eodds"] = None
    return entry


def train(train_set: Dataset, valid: Dataset, cfg: TrainConfig, *,
          init_override: Dataset | None = None,
          on_high_step: StepHook | None = None) -> ReckonerModel:
    """Full pipeline: initialize, then refine over seeded mini-batches.

    Validation metrics are logged per epoch; the final model is the last
    state (no early stopping).
    """
    if train_set.n == 0 or valid.n == 0:
        raise DataError("train and valid sets must be nonempty")
    model = initialize(train_set, cfg, init_override=init_override,
                       on_high_step=on_high_step)
    refine_steps = cfg.total_iterations - cfg.init_steps
    stream = _BatchStream(train_set.n, cfg.batch_size, cfg.seed + _SEED_STREAM_REFINE)
    epoch_len = max(1, math.ceil(train_set.n / stream.batch_size))
    epoch_losses: list[float] = []
    k_counts: dict[int, int] = {}
    epoch = 0
    for step in range(refine_steps):
        idx = next(stream)
        first_of_epoch = step % epoch_len == 0
        run_pseudo = cfg.use_pseudo_learning and (
            cfg.pseudo_cadence == "batch" or first_of_epoch
        )
        log = refinement_step(model, train_set.x[idx], train_set.y[idx],
                              run_pseudo=run_pseudo)
        if on_high_step is not None:
            on_high_step(model.high_step_count - 1, model.high.params.values.copy())
        epoch_losses.append(log["loss"])
        if "k" in log:
            k_counts[log["k"]] = k_counts.get(log["k"], 0) + 1
        if (step + 1) % epoch_len == 0 or step + 1 == refine_steps:
            entry = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses)),
                     "k_histogram": {str(k): v for k, v in sorted(k_counts.items())}}
            entry.update(_validation_entry(model, valid))
            model.history.append(entry)
            epoch_losses, k_counts = [], {}
            epoch += 1
    return model


def predict(model: ReckonerModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """High-confidence classifier scores and labels; ties at 0.5 go to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.m:
        raise DataError(f"expected rows of width {model.m}, got shape {x.shape}")
    scores = model.high.score(model.high_input(x))
    return predict_labels(scores), scores


def erm_baseline(train_set: Dataset, cfg: TrainConfig, *,
                 on_high_step: StepHook | None = None) -> FeedForwardClassifier:
    """Plain supervised trainer: same architecture, budget, and seed streams.

    Matches the pipeline with noise and pseudo-learning disabled and the
    initialization phase run on the full training set.
    """
    if train_set.n == 0:
        raise DataError("training set is empty")
    model = FeedForwardClassifier.initialized(
        train_set.m, cfg.hidden1, cfg.hidden2, cfg.seed + _SEED_HIGH_INIT
    )
    state = AdamState.zeros(model.params.layout.size, lr=cfg.learning_rate)
    taken = _init_phase(model, state, train_set, cfg.init_steps, cfg.batch_size,
                        cfg.seed + _SEED_STREAM_HIGH, on_high_step)
    stream = _BatchStream(train_set.n, cfg.batch_size, cfg.seed + _SEED_STREAM_REFINE)
    y = train_set.y.astype(np.float64)
    for i in range(cfg.total_iterations - taken):
        idx = next(stream)
        grad = model.backward(train_set.x[idx], y[idx])
        adam_step(model.params, grad, state)
        if on_high_step is not None:
            on_high_step(taken + i, model.params.values.copy())
    return model

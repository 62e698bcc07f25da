"""Synthetic classification tasks and a trainer with a learnable kernel bank.

The model is deliberately small: per-clip features are time-averaged
log-power rows, standardized by constants frozen from the training split at
initialization, followed by a linear softmax head. Both the head and the
bank parameters (m, f_b, f_c) train by full-batch Nesterov momentum with
exponential learning-rate decay, so a run is a pure function of the corpus
and the config. The bank starts at the STFT-equivalent point; freezing it
for the whole run therefore yields the fixed-STFT baseline through the
identical code path.

Bank gradients flow through the analytic cotangent pullback. A proposed
bank step is validated before it is taken (m >= 0, f_b > 0, ordered in-band
f_c, clearance from sinc-zero exclusion zones); invalid steps are halved up
to 20 times and skipped when still invalid, with the bank velocity reset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from fbsplab.bank import FbspParams, KernelBank, fbsp_kernel, init_params
from fbsplab.gradients import (
    SINC_ZONE_RADIUS,
    ParamGradient,
    fbsp_loss,
    kernel_jacobian_vector,
    loss_gradient,
    sinc_zone_clearance,
)
from fbsplab.perturb import add_awgn
from fbsplab.runio import write_csv
from fbsplab.signals import FrameGrid, Waveform, WindowSpec, derive_seed, frame, generate
from fbsplab.transform import DEFAULT_EPS, Spectrogram, analyze, log_power

__all__ = [
    "FeatureSpec",
    "ClassSpec",
    "TaskCorpus",
    "make_task",
    "TrainConfig",
    "LinearHead",
    "EpochRecord",
    "TrainLog",
    "TrainingDiverged",
    "TrainedModel",
    "TrainResult",
    "train",
]

_MAX_STEP_HALVINGS = 20


@dataclass(frozen=True)
class FeatureSpec:
    """Framing and log-power settings shared by training and inference."""

    n_fft: int = 256
    hop: int = 128
    window: str = "hann"
    eps: float = DEFAULT_EPS

    def __post_init__(self) -> None:
        if self.n_fft < 2:
            raise ValueError(f"n_fft must be at least 2, got {self.n_fft}")
        if self.hop < 1:
            raise ValueError(f"hop must be positive, got {self.hop}")
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise ValueError(f"eps must be positive, got {self.eps}")
        WindowSpec(self.window, self.n_fft)  # validates the window kind

    def window_values(self) -> np.ndarray:
        return WindowSpec(self.window, self.n_fft).values()

    def grid_for(self, num_samples: int) -> FrameGrid:
        grid = FrameGrid.for_length(num_samples, self.n_fft, self.hop)
        if grid.num_frames < 1:
            raise ValueError(
                f"{num_samples} samples are too few for frames of {self.n_fft}")
        return grid


@dataclass(frozen=True)
class ClassSpec:
    """One synthetic class: a generator kind plus its frequency band.

    tone draws a frequency uniformly in [low_hz, high_hz]; chirp draws the
    endpoints independently from the band; band_noise fills the band itself.
    """

    name: str
    kind: str
    low_hz: float
    high_hz: float
    amplitude: tuple[float, float] = (0.6, 0.95)

    def __post_init__(self) -> None:
        if self.kind not in ("tone", "chirp", "band_noise"):
            raise ValueError(f"unknown class kind {self.kind!r}")
        if not 0.0 < self.low_hz < self.high_hz:
            raise ValueError(
                f"band must satisfy 0 < low < high, got [{self.low_hz}, {self.high_hz}]")
        lo, hi = self.amplitude
        if not 0.0 < lo <= hi:
            raise ValueError(f"amplitude range must satisfy 0 < lo <= hi, got {self.amplitude}")


@dataclass(frozen=True)
class TaskCorpus:
    """Generated clips with labels and a fixed train/validation split."""

    waveforms: tuple[Waveform, ...]
    labels: np.ndarray
    train_indices: np.ndarray
    val_indices: np.ndarray
    class_names: tuple[str, ...]
    sample_rate: float

    def __post_init__(self) -> None:
        labels = np.array(self.labels, dtype=np.int64)
        train = np.array(self.train_indices, dtype=np.int64)
        val = np.array(self.val_indices, dtype=np.int64)
        if labels.shape != (len(self.waveforms),):
            raise ValueError("labels must align with waveforms")
        combined = np.sort(np.concatenate([train, val]))
        if not np.array_equal(combined, np.arange(len(self.waveforms))):
            raise ValueError("train and validation indices must partition the corpus")
        for arr in (labels, train, val):
            arr.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "train_indices", train)
        object.__setattr__(self, "val_indices", val)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return len(self.waveforms)


def _draw_example(spec: ClassSpec, rng: np.random.Generator, duration: float,
                  sample_rate: float, noise_seed: int) -> Waveform:
    amplitude = float(rng.uniform(*spec.amplitude))
    if spec.kind == "tone":
        params = {
            "frequency": float(rng.uniform(spec.low_hz, spec.high_hz)),
            "amplitude": amplitude,
            "phase": float(rng.uniform(0.0, 2.0 * math.pi)),
        }
        return generate("sine", params, duration, sample_rate)
    if spec.kind == "chirp":
        params = {
            "f_start": float(rng.uniform(spec.low_hz, spec.high_hz)),
            "f_end": float(rng.uniform(spec.low_hz, spec.high_hz)),
            "amplitude": amplitude,
        }
        return generate("chirp", params, duration, sample_rate)
    params = {"low_hz": spec.low_hz, "high_hz": spec.high_hz, "amplitude": amplitude}
    return generate("band_noise", params, duration, sample_rate, seed=noise_seed)


def make_task(
    classes: Sequence[ClassSpec],
    samples_per_class: int,
    duration: float = 0.75,
    sample_rate: float = 8000.0,
    seed: int = 0,
    snr_range: float | tuple[float, float] | None = None,
    train_fraction: float = 0.8,
) -> TaskCorpus:
    """Generate a labeled corpus with a seeded 80/20 split.

    Every example draws from its own generator seeded by (seed, class index,
    example index), so corpora are reproducible and individual clips can be
    regenerated in isolation. snr_range of None keeps clips clean; a scalar
    adds noise at that level, a (lo, hi) pair draws a level per clip.
    """
    if len(classes) < 2:
        raise ValueError("a classification task needs at least two classes")
    if samples_per_class < 2:
        raise ValueError("need at least two samples per class")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    waveforms: list[Waveform] = []
    labels: list[int] = []
    for class_idx, spec in enumerate(classes):
        for example_idx in range(samples_per_class):
            rng = np.random.default_rng(derive_seed(seed, class_idx, example_idx))
            wf = _draw_example(spec, rng, duration, sample_rate,
                               noise_seed=derive_seed(seed, class_idx, example_idx, 1))
            if snr_range is not None:
                level = (float(rng.uniform(*snr_range))
                         if isinstance(snr_range, tuple) else float(snr_range))
                wf = add_awgn(wf, level,
                              seed=derive_seed(seed, class_idx, example_idx, 2))
            waveforms.append(wf)
            labels.append(class_idx)
    total = len(waveforms)
    order = np.random.default_rng(derive_seed(seed, len(classes), 0, 9)).permutation(total)
    n_train = int(train_fraction * total)
    if not 0 < n_train < total:
        raise ValueError("split leaves an empty train or validation set")
    return TaskCorpus(
        waveforms=tuple(waveforms),
        labels=np.array(labels),
        train_indices=order[:n_train],
        val_indices=order[n_train:],
        class_names=tuple(spec.name for spec in classes),
        sample_rate=float(sample_rate),
    )


# ---------------------------------------------------------------------------
# model pieces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr: float = 0.1
    lr_decay: float = 0.985
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lambda_fbsp: float = 1.0
    freeze_epochs: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if not (math.isfinite(self.lr) and self.lr > 0):
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0 or self.lambda_fbsp < 0:
            raise ValueError("weight_decay and lambda_fbsp must be non-negative")
        if self.freeze_epochs < 0:
            raise ValueError(f"freeze_epochs must be >= 0, got {self.freeze_epochs}")


@dataclass(frozen=True)
class LinearHead:
    """Softmax head over standardized features; the stats are constants."""

    weights: np.ndarray
    bias: np.ndarray
    feat_mean: np.ndarray
    feat_std: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64)
        mean = np.array(self.feat_mean, dtype=np.float64)
        std = np.array(self.feat_std, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError("weights must be (classes, features) with matching bias")
        if mean.shape != (w.shape[1],) or std.shape != (w.shape[1],):
            raise ValueError("standardization stats must match the feature width")
        if np.any(std <= 0):
            raise ValueError("feat_std must be strictly positive")
        for arr in (w, b, mean, std):
            if not np.all(np.isfinite(arr)):
                raise ValueError("head contains non-finite values")
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "feat_mean", mean)
        object.__setattr__(self, "feat_std", std)

    def logits(self, feats: np.ndarray) -> np.ndarray:
        z = (feats - self.feat_mean) / self.feat_std
        return z @ self.weights.T + self.bias


@dataclass(frozen=True)
class EpochRecord:
    """State snapshot taken at the start of an epoch, before its update."""

    epoch: int
    total_loss: float
    task_loss: float
    fbsp_loss: float
    accuracy: float
    m: float
    f_b: float

    FIELDS = ("epoch", "total_loss", "task_loss", "fbsp_loss", "accuracy", "m", "f_b")

    def row(self) -> list:
        return [getattr(self, name) for name in self.FIELDS]


@dataclass(frozen=True)
class TrainLog:
    records: tuple[EpochRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path: str) -> None:
        write_csv(path, list(EpochRecord.FIELDS), [r.row() for r in self.records])


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the log up to the failing epoch."""

    def __init__(self, message: str, log: TrainLog):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class TrainedModel:
    """Inference bundle: bank parameters, head, and feature settings."""

    params: FbspParams
    head: LinearHead
    features: FeatureSpec
    class_names: tuple[str, ...]
    bank_label: str = "fbsp"

    @cached_property
    def bank(self) -> KernelBank:
        return fbsp_kernel(self.params, self.features.n_fft)

    def spectrogram(self, signal: Waveform) -> Spectrogram:
        grid = self.features.grid_for(len(signal))
        window = WindowSpec(self.features.window, self.features.n_fft)
        coeffs = analyze(signal, self.bank, grid, window)
        return log_power(coeffs, self.features.eps, grid, self.bank)

    def feature_vector(self, signal: Waveform) -> np.ndarray:
        return self.spectrogram(signal).values.mean(axis=1)

    def predict(self, signal: Waveform) -> int:
        logits = self.head.logits(self.feature_vector(signal)[None, :])
        return int(np.argmax(logits[0]))


@dataclass(frozen=True)
class TrainResult:
    params: FbspParams
    head: LinearHead
    log: TrainLog
    features: FeatureSpec
    class_names: tuple[str, ...]

    def model(self, bank_label: str = "fbsp") -> TrainedModel:
        return TrainedModel(params=self.params, head=self.head,
                            features=self.features, class_names=self.class_names,
                            bank_label=bank_label)


# ---------------------------------------------------------------------------
# forward/backward over cached frames
# ---------------------------------------------------------------------------


def prepare_frames(corpus: TaskCorpus, features: FeatureSpec) -> list[np.ndarray]:
    """Window and frame every clip once; training reuses these arrays."""
    window = WindowSpec(features.window, features.n_fft)
    out = []
    for wf in corpus.waveforms:
        grid = features.grid_for(len(wf))
        out.append(frame(wf, grid, window))
    return out


def feature_matrix(params: FbspParams, frames_list: Sequence[np.ndarray],
                   features: FeatureSpec) -> np.ndarray:
    """Stack per-clip time-averaged log-power vectors into (clips, filters)."""
    bank = fbsp_kernel(params, features.n_fft)
    feats = np.empty((len(frames_list), params.num_filters))
    for i, frames in enumerate(frames_list):
        coeffs = bank.weights @ frames.T
        power = coeffs.real ** 2 + coeffs.imag ** 2
        feats[i] = np.log(power + features.eps).mean(axis=1)
    return feats


def _softmax_ce(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    probs = expv / expv.sum(axis=1, keepdims=True)
    rows = np.arange(len(labels))
    log_norm = np.log(expv.sum(axis=1))
    ce = float(np.mean(log_norm - shifted[rows, labels]))
    return ce, probs


def pipeline_loss(
    params: FbspParams,
    head: LinearHead,
    frames_list: Sequence[np.ndarray],
    labels: np.ndarray,
    features: FeatureSpec,
    lambda_fbsp: float = 0.0,
    weight_decay: float = 0.0,
) -> float:
    """Total objective: cross-entropy + weight decay + lambda * bank loss."""
    feats = feature_matrix(params, frames_list, features)
    ce, _ = _softmax_ce(head.logits(feats), labels)
    wd_term = 0.5 * weight_decay * float(np.sum(head.weights ** 2))
    reg = lambda_fbsp * fbsp_loss(fbsp_kernel(params, features.n_fft)) if lambda_fbsp else 0.0
    return ce + wd_term + reg


def pipeline_gradients(
    params: FbspParams,
    head: LinearHead,
    frames_list: Sequence[np.ndarray],
    labels: np.ndarray,
    features: FeatureSpec,
    lambda_fbsp: float = 0.0,
    weight_decay: float = 0.0,
) -> tuple[float, float, float, np.ndarray, np.ndarray, ParamGradient]:
    """One full-batch forward/backward pass.

    Returns (total, task_ce, bank_loss, grad_weights, grad_bias,
    bank_gradient). The bank gradient backpropagates the cross-entropy
    through log-power features into the kernel entries, then pulls the
    resulting cotangent back to (m, f_b, f_c) and adds the analytic
    regularizer gradient.
    """
    n_fft = features.n_fft
    bank = fbsp_kernel(params, n_fft)
    batch = len(frames_list)
    feats = np.empty((batch, params.num_filters))
    cache = []
    for i, frames in enumerate(frames_list):
        coeffs = bank.weights @ frames.T
        power = coeffs.real ** 2 + coeffs.imag ** 2
        feats[i] = np.log(power + features.eps).mean(axis=1)
        cache.append((coeffs, power))
    z = (feats - head.feat_mean) / head.feat_std
    logits = z @ head.weights.T + head.bias
    ce, probs = _softmax_ce(logits, labels)
    bank_reg = fbsp_loss(bank)
    wd_term = 0.5 * weight_decay * float(np.sum(head.weights ** 2))
    total = ce + wd_term + lambda_fbsp * bank_reg

    dlogits = probs.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    dlogits /= batch
    grad_w = dlogits.T @ z + weight_decay * head.weights
    grad_b = dlogits.sum(axis=0)
    dfeat = (dlogits @ head.weights) / head.feat_std

    adjoint = np.zeros((params.num_filters, n_fft), dtype=np.complex128)
    for i, frames in enumerate(frames_list):
        coeffs, power = cache[i]
        dpower = (dfeat[i][:, None] / coeffs.shape[1]) / (power + features.eps)
        adjoint += (2.0 * dpower * coeffs) @ frames
    bank_grad = kernel_jacobian_vector(params, n_fft, np.conj(adjoint) / 2.0)
    if lambda_fbsp:
        reg = loss_gradient(params, n_fft)
        bank_grad = ParamGradient(
            d_m=bank_grad.d_m + lambda_fbsp * reg.d_m,
            d_fb=bank_grad.d_fb + lambda_fbsp * reg.d_fb,
            d_fc=bank_grad.d_fc + lambda_fbsp * reg.d_fc,
        )
    return total, ce, bank_reg, grad_w, grad_b, bank_grad


# ---------------------------------------------------------------------------
# the trainer
# ---------------------------------------------------------------------------


def _params_valid(m: float, f_b: float, f_c: np.ndarray, n_fft: int) -> bool:
    try:
        FbspParams(m=m, f_b=f_b, f_c=f_c)
    except ValueError:
        return False
    if m > 0 and sinc_zone_clearance(m, f_b, n_fft) < SINC_ZONE_RADIUS:
        return False
    return True


def train(
    corpus: TaskCorpus,
    config: TrainConfig = TrainConfig(),
    features: FeatureSpec = FeatureSpec(),
    init: FbspParams | None = None,
) -> TrainResult:
    """Full-batch training of the head and (after a freeze) the bank.

    The log holds exactly config.epochs records, each snapshotting the state
    at the start of its epoch; the returned parameters include the final
    update. Raises TrainingDiverged when the objective leaves the reals.
    """
    params = init if init is not None else init_params(features.n_fft)
    frames_all = prepare_frames(corpus, features)
    train_idx = corpus.train_indices
    val_idx = corpus.val_indices
    train_frames = [frames_all[i] for i in train_idx]
    train_labels = corpus.labels[train_idx]
    val_frames = [frames_all[i] for i in val_idx]
    val_labels = corpus.labels[val_idx]

    init_feats = feature_matrix(params, train_frames, features)
    feat_mean = init_feats.mean(axis=0)
    feat_std = np.maximum(init_feats.std(axis=0), 1e-8)

    num_classes = corpus.num_classes
    weights = np.zeros((num_classes, params.num_filters))
    bias = np.zeros(num_classes)
    vel_w = np.zeros_like(weights)
    vel_b = np.zeros_like(bias)
    vel_bank = np.zeros(2 + params.num_filters)

    def head_now() -> LinearHead:
        return LinearHead(weights, bias, feat_mean, feat_std)

    def val_accuracy() -> float:
        feats = feature_matrix(params, val_frames, features)
        pred = np.argmax(head_now().logits(feats), axis=1)
        return float(np.mean(pred == val_labels))

    records: list[EpochRecord] = []
    for epoch in range(config.epochs):
        total, ce, bank_reg, grad_w, grad_b, bank_grad = pipeline_gradients(
            params, head_now(), train_frames, train_labels, features,
            lambda_fbsp=config.lambda_fbsp, weight_decay=config.weight_decay,
        )
        records.append(EpochRecord(
            epoch=epoch, total_loss=total, task_loss=ce, fbsp_loss=bank_reg,
            accuracy=val_accuracy(), m=params.m, f_b=params.f_b,
        ))
        if not math.isfinite(total):
            raise TrainingDiverged(
                f"objective became non-finite at epoch {epoch}",
                TrainLog(tuple(records)))

        lr = config.lr * config.lr_decay ** epoch
        mu = config.momentum

        vel_w = mu * vel_w + grad_w
        weights = weights - lr * (grad_w + mu * vel_w)
        vel_b = mu * vel_b + grad_b
        bias = bias - lr * (grad_b + mu * vel_b)

        if epoch < config.freeze_epochs:
            continue
        grad_vec = np.concatenate(([bank_grad.d_m, bank_grad.d_fb], bank_grad.d_fc))
        vel_bank = mu * vel_bank + grad_vec
        step = lr * (grad_vec + mu * vel_bank)
        theta = np.concatenate(([params.m, params.f_b], params.f_c))
        applied = False
        for _ in range(_MAX_STEP_HALVINGS + 1):
            proposed = theta - step
            if _params_valid(proposed[0], proposed[1], proposed[2:], features.n_fft):
                params = FbspParams(m=proposed[0], f_b=proposed[1], f_c=proposed[2:])
                applied = True
                break
            step = step / 2.0
        if not applied:
            vel_bank = np.zeros_like(vel_bank)  # drop momentum into the wall

    return TrainResult(params=params, head=head_now(), log=TrainLog(tuple(records)),
                       features=features, class_names=corpus.class_names)

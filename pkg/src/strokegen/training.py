"""Training loop: per-epoch regenerated patch corpora streamed as one
continuous token sequence, Adam with warmup/inverse-sqrt learning rate,
held-out loss tracking and JSON checkpoints."""

from __future__ import annotations

import base64
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentConfig, generate_patch_set
from .autodiff import NonFiniteError, Tensor, cross_entropy, no_grad, reshape
from .geometry import StrokeImage
from .model import ModelConfig, encoder_forward, init_encoder_params
from .tokenizer import Vocabulary, build_vocabulary, encode, image_to_move_sequence

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
EVAL_CHUNK = 100  # windows per forward pass during evaluation

# rng stream tags mixed into numpy SeedSequence entropy as (seed, tag[, index])
SEED_HELDOUT = 0
SEED_EPOCH = 1
SEED_SHUFFLE = 2
SEED_INIT = 3
SEED_FIXED = 4
SEED_SAMPLING = 5


def derived_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, *key)))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    patches_per_epoch: int = 500
    batch_size: int = 200
    warmup_steps: int = 4000
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9
    seed: int = 0
    flatten_error: float = 1.0
    max_move_len: int = 15
    heldout_patches: int = 500
    seq_ceiling: int = 512
    fixed_patch_set: int | None = None
    reversal_probability: float = 0.5
    scale_min: float = 0.5
    d_model: int = 52
    n_layers: int = 6
    n_heads: int = 4
    d_ff: int = 2048
    double_attention: bool = True
    jobs: int = 1  # parallel patch generation; never changes results

    def __post_init__(self):
        for name in ("epochs", "patches_per_epoch", "batch_size",
                     "warmup_steps", "heldout_patches", "seq_ceiling",
                     "max_move_len", "jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.flatten_error <= 0:
            raise ValueError("flatten_error must be positive")
        if self.fixed_patch_set is not None and self.fixed_patch_set < 1:
            raise ValueError("fixed_patch_set must be >= 1 when set")

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


def desk_preset(**overrides) -> TrainConfig:
    """Scaled-down configuration that preserves the qualitative loss trends
    of the full setup while training in about a minute on a laptop CPU.

    The short warmup and small batches push the model past its
    generalization optimum within a few epochs, so a fixed patch set shows
    the rising held-out curve inside the 30-epoch budget.
    """
    base = dict(
        epochs=30,
        patches_per_epoch=100,
        batch_size=10,
        warmup_steps=150,
        heldout_patches=100,
        seq_ceiling=64,
        d_model=32,
        n_layers=2,
        n_heads=4,
        d_ff=256,
    )
    base.update(overrides)
    return TrainConfig(**base)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

def lr_schedule(step: int, d_model: int, warmup: int) -> float:
    """Linear ramp to the peak at step == warmup, then inverse-sqrt decay."""
    if step < 1:
        raise ValueError("step must be >= 1")
    return d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_adam_state(params: dict[str, Tensor]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p.data) for k, p in params.items()},
        v={k: np.zeros_like(p.data) for k, p in params.items()},
    )


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.98, eps: float = 1e-9):
    """Bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Stream batching
# ---------------------------------------------------------------------------

def stream_windows(sequences: list[list[int]], seq_len: int,
                   order: np.ndarray | None = None) -> np.ndarray:
    """Concatenate token sequences and cut non-overlapping (seq_len+1) windows."""
    if order is None:
        order = np.arange(len(sequences))
    stream = np.concatenate([np.asarray(sequences[i], dtype=np.int64)
                             for i in order])
    n = len(stream) // (seq_len + 1)
    if n == 0:
        raise ValueError(
            f"stream of {len(stream)} tokens is shorter than a window "
            f"({seq_len + 1})"
        )
    return stream[: n * (seq_len + 1)].reshape(n, seq_len + 1)


def build_stream_batches(
    sequences: list[list[int]], seq_len: int, batch_size: int,
    rng: np.random.Generator,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled (input, target) batches of next-token windows.

    Patch sequences are concatenated in random order, so a window may span a
    patch boundary; windows never overlap and the trailing partial window is
    dropped. target[i] == input[i+1] within each window.
    """
    windows = stream_windows(sequences, seq_len,
                             order=rng.permutation(len(sequences)))
    windows = windows[rng.permutation(len(windows))]
    batches = []
    for i in range(0, len(windows), batch_size):
        chunk = windows[i: i + batch_size]
        batches.append((chunk[:, :-1].copy(), chunk[:, 1:].copy()))
    return batches


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    heldout_loss: float


@dataclass
class Checkpoint:
    model: ModelConfig
    train: TrainConfig
    vocab: Vocabulary
    params: dict[str, np.ndarray]
    epoch: int
    loss_history: list[EpochStats]
    rng_state: dict
    version: int = CHECKPOINT_VERSION

    def param_tensors(self) -> dict[str, Tensor]:
        return {k: Tensor(v) for k, v in self.params.items()}


def checkpoint_to_json(ckpt: Checkpoint) -> dict:
    return {
        "version": ckpt.version,
        "model": ckpt.model.to_json_dict(),
        "train": ckpt.train.to_json_dict(),
        "vocabulary": ckpt.vocab.to_json_dict(),
        "epoch": ckpt.epoch,
        "loss_history": [
            [s.epoch, s.train_loss, s.heldout_loss] for s in ckpt.loss_history
        ],
        "rng_state": ckpt.rng_state,
        "params": {
            name: {
                "shape": list(arr.shape),
                "dtype": "float32",
                "data": base64.b64encode(
                    np.ascontiguousarray(arr.astype("<f4")).tobytes()
                ).decode("ascii"),
            }
            for name, arr in ckpt.params.items()
        },
    }


def checkpoint_from_json(data: dict) -> Checkpoint:
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')}")
    params = {}
    for name, entry in data["params"].items():
        raw = base64.b64decode(entry["data"])
        arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
        params[name] = arr.astype(np.float32)
    return Checkpoint(
        model=ModelConfig.from_json_dict(data["model"]),
        train=TrainConfig.from_json_dict(data["train"]),
        vocab=Vocabulary.from_json_dict(data["vocabulary"]),
        params=params,
        epoch=int(data["epoch"]),
        loss_history=[EpochStats(int(e), float(t), float(h))
                      for e, t, h in data["loss_history"]],
        rng_state=data["rng_state"],
        version=int(data["version"]),
    )


def save_checkpoint(ckpt: Checkpoint, path):
    with open(path, "w") as fh:
        json.dump(checkpoint_to_json(ckpt), fh, sort_keys=True,
                  separators=(",", ":"))


def load_checkpoint(path) -> Checkpoint:
    with open(path) as fh:
        return checkpoint_from_json(json.load(fh))


def write_loss_csv(history: list[EpochStats], path):
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,heldout_loss\n")
        for s in history:
            fh.write(f"{s.epoch},{s.train_loss!r},{s.heldout_loss!r}\n")


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def tokenize_patches(patches: list[StrokeImage], vocab: Vocabulary,
                     flatten_error: float, max_len: int) -> list[list[int]]:
    return [
        encode(image_to_move_sequence(p, flatten_error, max_len), vocab)
        for p in patches
    ]


def train(image: StrokeImage, cfg: TrainConfig, on_epoch=None) -> Checkpoint:
    """Train the encoder on patches of one image; deterministic under seed.

    Each epoch regenerates a fresh patch set (unless ``fixed_patch_set``
    pins one), makes a single optimizer pass over its stream windows and
    then evaluates the held-out loss. ``on_epoch`` receives each EpochStats.
    """
    if not image.paths:
        raise ValueError("cannot train on an image without paths")

    original_moves = image_to_move_sequence(image, cfg.flatten_error,
                                            cfg.max_move_len)
    seq_len = max(2, min(len(original_moves), cfg.seq_ceiling))
    vocab = build_vocabulary([original_moves], cfg.max_move_len)
    model_cfg = ModelConfig(
        vocab_size=vocab.size,
        seq_len=seq_len,
        d_model=cfg.d_model,
        n_layers=cfg.n_layers,
        n_heads=cfg.n_heads,
        d_ff=cfg.d_ff,
        double_attention=cfg.double_attention,
    )
    params = init_encoder_params(model_cfg, derived_rng(cfg.seed, SEED_INIT))
    aug_cfg = AugmentConfig(
        reversal_probability=cfg.reversal_probability,
        scale_min=cfg.scale_min,
        rng_seed=cfg.seed,
    )

    heldout = generate_patch_set(image, cfg.heldout_patches, aug_cfg,
                                 derived_rng(cfg.seed, SEED_HELDOUT),
                                 jobs=cfg.jobs)
    heldout_windows = stream_windows(
        tokenize_patches(heldout, vocab, cfg.flatten_error, cfg.max_move_len),
        seq_len,
    )

    fixed_sequences: list[list[int]] | None = None
    if cfg.fixed_patch_set is not None:
        fixed = generate_patch_set(image, cfg.fixed_patch_set, aug_cfg,
                                   derived_rng(cfg.seed, SEED_FIXED),
                                   jobs=cfg.jobs)
        fixed_sequences = tokenize_patches(fixed, vocab, cfg.flatten_error,
                                           cfg.max_move_len)

    adam = init_adam_state(params)
    history: list[EpochStats] = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        if fixed_sequences is not None:
            sequences = fixed_sequences
        else:
            patches = generate_patch_set(
                image, cfg.patches_per_epoch, aug_cfg,
                derived_rng(cfg.seed, SEED_EPOCH, epoch), jobs=cfg.jobs,
            )
            sequences = tokenize_patches(patches, vocab, cfg.flatten_error,
                                         cfg.max_move_len)
        batches = build_stream_batches(sequences, seq_len, cfg.batch_size,
                                       derived_rng(cfg.seed, SEED_SHUFFLE, epoch))
        loss_sum = 0.0
        window_count = 0
        for inputs, targets in batches:
            step += 1
            lr = lr_schedule(step, cfg.d_model, cfg.warmup_steps)
            for p in params.values():
                p.grad = None
            logits = encoder_forward(inputs, params, model_cfg)
            n = inputs.shape[0] * inputs.shape[1]
            loss = cross_entropy(
                reshape(logits, (n, model_cfg.vocab_size)), targets.reshape(-1)
            )
            loss.backward()
            grads = {k: p.grad for k, p in params.items()}
            adam_step(params, grads, adam, lr, cfg.beta1, cfg.beta2,
                      cfg.adam_eps)
            loss_sum += float(loss.data) * inputs.shape[0]
            window_count += inputs.shape[0]

        stats = EpochStats(
            epoch=epoch,
            train_loss=loss_sum / window_count,
            heldout_loss=eval_stream_loss(params, model_cfg, heldout_windows),
        )
        history.append(stats)
        logger.info("epoch %d: train %.4f heldout %.4f (%d steps)",
                    epoch, stats.train_loss, stats.heldout_loss, step)
        if on_epoch is not None:
            on_epoch(stats)

    return Checkpoint(
        model=model_cfg,
        train=cfg,
        vocab=vocab,
        params={k: p.data for k, p in params.items()},
        epoch=cfg.epochs,
        loss_history=history,
        rng_state={
            "seed": cfg.seed,
            "epochs_completed": cfg.epochs,
            "optimizer_steps": step,
            "blas_threads": os.environ.get("OPENBLAS_NUM_THREADS")
            or os.environ.get("OMP_NUM_THREADS") or "default",
        },
    )


def eval_stream_loss(params: dict[str, Tensor], model_cfg: ModelConfig,
                     windows: np.ndarray) -> float:
    """Mean next-token cross-entropy over precut windows; no updates."""
    total = 0.0
    tokens = 0
    with no_grad():
        for i in range(0, len(windows), EVAL_CHUNK):
            chunk = windows[i: i + EVAL_CHUNK]
            inputs = chunk[:, :-1]
            targets = chunk[:, 1:].reshape(-1)
            logits = encoder_forward(inputs, params, model_cfg)
            n = inputs.shape[0] * inputs.shape[1]
            loss = cross_entropy(
                reshape(logits, (n, model_cfg.vocab_size)), targets
            )
            total += float(loss.data) * n
            tokens += n
    return total / tokens


def evaluate_held_out(ckpt: Checkpoint, patches: list[StrokeImage]) -> float:
    """Held-out mean cross-entropy of a patch set under a checkpoint."""
    sequences = tokenize_patches(patches, ckpt.vocab, ckpt.train.flatten_error,
                                 ckpt.train.max_move_len)
    windows = stream_windows(sequences, ckpt.model.seq_len)
    return eval_stream_loss(ckpt.param_tensors(), ckpt.model, windows)


def heldout_patch_set(ckpt: Checkpoint, image: StrokeImage) -> list[StrokeImage]:
    """Regenerate the held-out patch set a training run used."""
    aug_cfg = AugmentConfig(
        reversal_probability=ckpt.train.reversal_probability,
        scale_min=ckpt.train.scale_min,
        rng_seed=ckpt.train.seed,
    )
    return generate_patch_set(image, ckpt.train.heldout_patches, aug_cfg,
                              derived_rng(ckpt.train.seed, SEED_HELDOUT))

"""Optimization and the pretraining loop.

``train_smf`` drives any model exposing the small protocol used here
(``parameters``, ``training_loss``, ``validation_batch_loss``): per step it
asks the data source for a same-availability batch, lets the model compute
its loss on a fresh tape, sweeps gradients and applies one optimizer step.
The loop owns a single random generator for shuffling, batch augmentation
and mask sampling, which is what makes checkpoint-resume bitwise exact.

Checkpoints are a versioned binary: magic + version, a canonical JSON
header (epoch, config fingerprint, optimizer metadata, generator state,
parameter manifest), then one little-endian float64 payload.  A save /
load / save round trip reproduces the file byte for byte.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import (
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ContractError,
)
from .tensor import Tape, Tensor

COORDS_MODALITY = 0  # slot 0 is the coordinates modality in every profile

CHECKPOINT_MAGIC = b"SMFCKPT\x00"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# learning-rate schedule


@dataclass(frozen=True)
class ScheduleConfig:
    """Cosine decay to zero with a linear warm-up.

    ``warmup`` may be an absolute step count (int) or a fraction of
    ``total_steps`` (float in [0, 1]).
    """

    base_lr: float
    total_steps: int
    warmup: float = 0.05

    def warmup_steps(self) -> int:
        if isinstance(self.warmup, float) and 0.0 <= self.warmup <= 1.0:
            steps = int(round(self.warmup * self.total_steps))
        else:
            steps = int(self.warmup)
        if not (0 <= steps <= self.total_steps):
            raise ContractError(
                f"warmup steps {steps} outside [0, {self.total_steps}]"
            )
        return steps


def cosine_lr(step: int, sched: ScheduleConfig) -> float:
    """Learning rate at ``step``: linear ramp to base, cosine decay to zero.

    Steps past the end clamp to the final value (zero).
    """
    if step < 0:
        raise ContractError(f"negative step {step}")
    total = sched.total_steps
    warmup = sched.warmup_steps()
    if step < warmup:
        return sched.base_lr * step / warmup
    if step >= total:
        return 0.0
    progress = (step - warmup) / (total - warmup)
    return sched.base_lr * 0.5 * (1.0 + np.cos(np.pi * progress))


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class OptimizerState:
    """Moment buffers and hyperparameters for one optimizer instance."""

    kind: str
    hyper: dict
    step: int
    buffers: dict

    @classmethod
    def sgd_momentum(
        cls,
        params: dict,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
    ) -> "OptimizerState":
        buffers = {name: {"v": np.zeros_like(p.data)} for name, p in params.items()}
        return cls(
            kind="sgd_momentum",
            hyper={"momentum": momentum, "weight_decay": weight_decay},
            step=0,
            buffers=buffers,
        )

    @classmethod
    def adamw(
        cls,
        params: dict,
        betas: tuple = (0.9, 0.999),
        weight_decay: float = 1e-5,
        eps: float = 1e-8,
    ) -> "OptimizerState":
        buffers = {
            name: {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
            for name, p in params.items()
        }
        return cls(
            kind="adamw",
            hyper={
                "beta1": betas[0],
                "beta2": betas[1],
                "weight_decay": weight_decay,
                "eps": eps,
            },
            step=0,
            buffers=buffers,
        )


def optimizer_step(
    params: dict, grads: dict, state: OptimizerState, lr: float
) -> None:
    """One in-place update of every parameter.

    sgd_momentum: v <- mu*v + g; p <- p - lr*v.
    adamw: bias-corrected moments with decoupled weight decay.
    """
    state.step += 1
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ContractError(
                f"gradient shape {g.shape} does not match parameter "
                f"'{name}' of shape {p.data.shape}"
            )
        buf = state.buffers[name]
        if state.kind == "sgd_momentum":
            wd = state.hyper["weight_decay"]
            if wd != 0.0:
                g = g + wd * p.data
            v = buf["v"]
            v *= state.hyper["momentum"]
            v += g
            p.data -= lr * v
        elif state.kind == "adamw":
            b1 = state.hyper["beta1"]
            b2 = state.hyper["beta2"]
            eps = state.hyper["eps"]
            wd = state.hyper["weight_decay"]
            m = buf["m"]
            v = buf["v"]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            mhat = m / (1.0 - b1**state.step)
            vhat = v / (1.0 - b2**state.step)
            p.data -= lr * (mhat / (np.sqrt(vhat) + eps) + wd * p.data)
        else:
            raise ContractError(f"unknown optimizer kind '{state.kind}'")


# ---------------------------------------------------------------------------
# availability profiles


@dataclass(frozen=True)
class AvailabilityProfile:
    """Per-location sets of available modalities.

    Every set contains the coordinates modality plus at least one other, so
    a mask bipartition always exists.
    """

    sets: tuple

    def __post_init__(self):
        for s in self.sets:
            if COORDS_MODALITY not in s or len(s) < 2:
                raise ContractError(
                    "every availability set needs coordinates plus >= 1 modality"
                )

    @classmethod
    def all_modalities(cls, n: int, num_modalities: int) -> "AvailabilityProfile":
        full = frozenset(range(num_modalities))
        return cls(sets=(full,) * n)

    @classmethod
    def bimodal(
        cls, n: int, num_modalities: int, rng: np.random.Generator
    ) -> "AvailabilityProfile":
        """Coordinates plus exactly one other modality, in equal shares."""
        others = list(range(1, num_modalities))
        tiers = np.array_split(rng.permutation(n), len(others))
        sets = [None] * n
        for other, tier in zip(others, tiers):
            for idx in tier:
                sets[idx] = frozenset({COORDS_MODALITY, other})
        return cls(sets=tuple(sets))

    @classmethod
    def partial(
        cls, n: int, num_modalities: int, rng: np.random.Generator
    ) -> "AvailabilityProfile":
        """Equal shares of locations carrying 1 .. K-1 extra modalities."""
        others = np.arange(1, num_modalities)
        counts = list(range(1, num_modalities))
        tiers = np.array_split(rng.permutation(n), len(counts))
        sets = [None] * n
        for count, tier in zip(counts, tiers):
            for idx in tier:
                chosen = rng.choice(others, size=count, replace=False)
                sets[idx] = frozenset({COORDS_MODALITY, *chosen.tolist()})
        return cls(sets=tuple(sets))

    def groups(self) -> dict:
        """Indices per distinct availability set, keys in sorted order."""
        grouped: dict = {}
        for i, s in enumerate(self.sets):
            grouped.setdefault(s, []).append(i)
        return {
            key: np.asarray(grouped[key], dtype=np.int64)
            for key in sorted(grouped, key=sorted)
        }


# ---------------------------------------------------------------------------
# metrics rows


@dataclass(frozen=True)
class MetricsRow:
    run_id: str
    epoch: int
    train_contr: float
    train_recon: float
    train_total: float
    val_total: Optional[float]
    lr: float
    tau: float


METRICS_COLUMNS = (
    "epoch",
    "train_contr",
    "train_recon",
    "train_total",
    "val_total",
    "lr",
    "tau",
)


def format_float(x: float) -> str:
    """Shortest round-trip decimal form of a 64-bit float."""
    return repr(float(x))


def _metrics_line(row: MetricsRow) -> str:
    cells = [
        str(row.epoch),
        format_float(row.train_contr),
        format_float(row.train_recon),
        format_float(row.train_total),
        "" if row.val_total is None else format_float(row.val_total),
        format_float(row.lr),
        format_float(row.tau),
    ]
    return ",".join(cells) + "\n"


def write_metrics_csv(path, rows: Sequence[MetricsRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for row in rows:
            fh.write(_metrics_line(row))


def append_metrics_row(path, row: MetricsRow) -> None:
    """Append one epoch row, writing the header on first use."""
    new_file = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        if new_file:
            fh.write(",".join(METRICS_COLUMNS) + "\n")
        fh.write(_metrics_line(row))


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int
    optimizer: str = "sgd_momentum"
    base_lr: float = 3e-4
    momentum: float = 0.9
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 0.0
    warmup: float = 0.05
    val_every: int = 1
    early_stop_patience: Optional[int] = None
    run_id: str = "run"

    def make_optimizer(self, params: dict) -> OptimizerState:
        if self.optimizer == "sgd_momentum":
            return OptimizerState.sgd_momentum(
                params, momentum=self.momentum, weight_decay=self.weight_decay
            )
        if self.optimizer == "adamw":
            return OptimizerState.adamw(
                params, betas=self.betas, weight_decay=self.weight_decay
            )
        raise ContractError(f"unknown optimizer '{self.optimizer}'")


def _epoch_batches(
    groups: dict, batch_size: int, rng: Optional[np.random.Generator]
) -> list:
    """Batches of same-availability indices; short remainders are kept.

    With a generator, indices are shuffled within each group and the batch
    order is shuffled across groups; without one the order is the
    deterministic group/index order (used for validation).
    """
    batches = []
    for availability, indices in groups.items():
        order = rng.permutation(indices) if rng is not None else indices
        for start in range(0, len(order), batch_size):
            batches.append((availability, order[start : start + batch_size]))
    if rng is not None and len(batches) > 1:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


def steps_per_epoch(groups: dict, batch_size: int) -> int:
    return sum(
        (len(indices) + batch_size - 1) // batch_size for indices in groups.values()
    )


def validation_loss(model, data, batch_size: int) -> float:
    """Mean validation objective over deterministic same-availability batches.

    For mask-trained models the per-batch value is itself the mean of the
    total loss over every admissible mask scheme.
    """
    batches = _epoch_batches(data.val_groups(), batch_size, rng=None)
    if not batches:
        raise ContractError("validation split is empty")
    values = [
        model.validation_batch_loss(data.make_batch(availability, idx, train=False))
        for availability, idx in batches
    ]
    return float(np.mean(values))


def train_smf(
    model,
    data,
    config: TrainConfig,
    rng: np.random.Generator,
    resume_from=None,
    checkpoint_path=None,
    checkpoint_every: Optional[int] = None,
    config_fingerprint: str = "",
    stop_after_epoch: Optional[int] = None,
    metrics_path=None,
) -> list:
    """Run the pretraining loop; returns the per-epoch metrics history.

    With ``metrics_path`` each epoch's row is appended to that CSV as it
    finishes, so long runs can be monitored from outside.

    Resuming from a checkpoint restores parameters, optimizer state and the
    loop generator, so an interrupted run continues bitwise identically to
    an uninterrupted one.  ``stop_after_epoch`` interrupts the loop at an
    epoch boundary without touching the schedule horizon (which always
    spans ``config.epochs``).  The early-stop tracker is not checkpointed;
    a resumed run restarts it.
    """
    params = model.parameters()
    train_groups = data.train_groups()
    if not train_groups or all(len(v) == 0 for v in train_groups.values()):
        raise ContractError("training split is empty")
    opt = config.make_optimizer(params)
    start_epoch = 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        ckpt.restore(params, opt, rng)
        start_epoch = ckpt.epoch

    per_epoch = steps_per_epoch(train_groups, config.batch_size)
    sched = ScheduleConfig(
        base_lr=config.base_lr,
        total_steps=config.epochs * per_epoch,
        warmup=config.warmup,
    )

    history: list[MetricsRow] = []
    best_val = np.inf
    best_params: Optional[dict] = None
    evals_since_best = 0
    global_step = start_epoch * per_epoch

    for epoch in range(start_epoch, config.epochs):
        sums = np.zeros(3)
        last_lr = 0.0
        tau = np.nan
        count = 0
        for availability, idx in _epoch_batches(
            train_groups, config.batch_size, rng
        ):
            batch = data.make_batch(availability, idx, train=True, rng=rng)
            lr = cosine_lr(global_step, sched)
            with Tape() as tape:
                loss, breakdown = model.training_loss(batch, rng)
                grad_map = T.backward(tape, loss)
            # Parameters that never entered this batch's graph (for example
            # an unavailable modality's encoder) get zero gradients.
            grads = {
                name: grad_map[p] if p in grad_map else np.zeros_like(p.data)
                for name, p in params.items()
            }
            optimizer_step(params, grads, opt, lr)
            clamp = getattr(model, "clamp_parameters", None)
            if clamp is not None:
                clamp()
            sums += (breakdown.contrastive, breakdown.reconstruction, breakdown.total)
            tau = breakdown.tau
            last_lr = lr
            global_step += 1
            count += 1

        val_total = None
        if config.val_every and (epoch + 1) % config.val_every == 0:
            val_total = validation_loss(model, data, config.batch_size)
            if config.early_stop_patience is not None:
                if val_total < best_val:
                    best_val = val_total
                    best_params = {k: p.data.copy() for k, p in params.items()}
                    evals_since_best = 0
                else:
                    evals_since_best += 1

        row = MetricsRow(
            run_id=config.run_id,
            epoch=epoch + 1,
            train_contr=sums[0] / count,
            train_recon=sums[1] / count,
            train_total=sums[2] / count,
            val_total=val_total,
            lr=last_lr,
            tau=tau,
        )
        history.append(row)
        if metrics_path is not None:
            append_metrics_row(metrics_path, row)

        if checkpoint_path is not None and checkpoint_every:
            if (epoch + 1) % checkpoint_every == 0:
                save_checkpoint(
                    checkpoint_path, params, opt, rng, epoch + 1, config_fingerprint
                )

        if (
            config.early_stop_patience is not None
            and evals_since_best > config.early_stop_patience
        ):
            break
        if stop_after_epoch is not None and epoch + 1 >= stop_after_epoch:
            break

    if config.early_stop_patience is not None and best_params is not None:
        for name, p in params.items():
            p.data = best_params[name]

    if checkpoint_path is not None and not checkpoint_every:
        save_checkpoint(
            checkpoint_path, params, opt, rng, len(history) + start_epoch,
            config_fingerprint,
        )
    return history


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class CheckpointData:
    epoch: int
    fingerprint: str
    rng_state: dict
    optimizer_kind: str
    optimizer_hyper: dict
    optimizer_step_count: int
    arrays: dict  # {(kind, name): ndarray}

    def restore(
        self,
        params: dict,
        opt: Optional[OptimizerState] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        for name, p in params.items():
            stored = self.arrays.get(("param", name))
            if stored is None:
                raise CheckpointShapeError(f"checkpoint lacks parameter '{name}'")
            if stored.shape != p.data.shape:
                raise CheckpointShapeError(
                    f"parameter '{name}': stored shape {stored.shape} vs "
                    f"model shape {p.data.shape}"
                )
            p.data = stored.copy()
        if opt is not None:
            if opt.kind != self.optimizer_kind:
                raise CheckpointShapeError(
                    f"optimizer kind mismatch: {opt.kind} vs {self.optimizer_kind}"
                )
            opt.hyper = dict(self.optimizer_hyper)
            opt.step = self.optimizer_step_count
            for name, bufs in opt.buffers.items():
                for buf_name in bufs:
                    stored = self.arrays.get((f"opt.{buf_name}", name))
                    if stored is None or stored.shape != bufs[buf_name].shape:
                        raise CheckpointShapeError(
                            f"optimizer buffer '{buf_name}' for '{name}' missing "
                            "or mis-shaped"
                        )
                    bufs[buf_name] = stored.copy()
        if rng is not None:
            rng.bit_generator.state = self.rng_state


def save_checkpoint(
    path,
    params: dict,
    opt: OptimizerState,
    rng: np.random.Generator,
    epoch: int,
    fingerprint: str,
) -> None:
    entries = []
    for name in sorted(params):
        entries.append(("param", name, params[name].data))
    for name in sorted(opt.buffers):
        for buf_name in sorted(opt.buffers[name]):
            entries.append((f"opt.{buf_name}", name, opt.buffers[name][buf_name]))

    manifest = []
    offset = 0
    for kind, name, arr in entries:
        manifest.append([kind, name, list(arr.shape), offset])
        offset += arr.size * 8

    header = {
        "epoch": int(epoch),
        "fingerprint": fingerprint,
        "manifest": manifest,
        "optimizer": {
            "kind": opt.kind,
            "hyper": opt.hyper,
            "step": opt.step,
        },
        "payload_bytes": offset,
        "rng": rng.bit_generator.state,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode(
        "utf-8"
    )

    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    buf.write(struct.pack("<Q", len(header_bytes)))
    buf.write(header_bytes)
    for _, _, arr in entries:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    blob = buf.getvalue()

    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as fh:
        blob = fh.read()

    head_len = len(CHECKPOINT_MAGIC) + 4 + 8
    if len(blob) < head_len:
        raise CheckpointTruncatedError(f"{path}: file shorter than fixed header")
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointVersionError(f"{path}: bad magic, not a checkpoint")
    (version,) = struct.unpack_from("<I", blob, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, expected {CHECKPOINT_VERSION}"
        )
    (header_len,) = struct.unpack_from("<Q", blob, len(CHECKPOINT_MAGIC) + 4)
    if len(blob) < head_len + header_len:
        raise CheckpointTruncatedError(f"{path}: header truncated")
    try:
        header = json.loads(blob[head_len : head_len + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointTruncatedError(f"{path}: unreadable header: {exc}") from exc

    payload_start = head_len + header_len
    payload_bytes = int(header["payload_bytes"])
    if len(blob) < payload_start + payload_bytes:
        raise CheckpointTruncatedError(
            f"{path}: payload truncated "
            f"({len(blob) - payload_start} of {payload_bytes} bytes)"
        )

    arrays = {}
    for kind, name, shape, offset in header["manifest"]:
        shape = tuple(int(s) for s in shape)
        count = int(np.prod(shape)) if shape else 1
        start = payload_start + int(offset)
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start)
        arrays[(kind, name)] = arr.reshape(shape).astype(np.float64)

    return CheckpointData(
        epoch=int(header["epoch"]),
        fingerprint=header["fingerprint"],
        rng_state=header["rng"],
        optimizer_kind=header["optimizer"]["kind"],
        optimizer_hyper=header["optimizer"]["hyper"],
        optimizer_step_count=int(header["optimizer"]["step"]),
        arrays=arrays,
    )

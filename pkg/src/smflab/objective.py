"""Training objectives: mask-scheme sampling, symmetric InfoNCE between two
fused views, z-scored latent reconstruction, and the weighted total.

The contrastive loss follows the two-term form

    -(1/N) * sum_i [ log f(a_i, b_i) / sum_j f(a_i, b_j)
                   + log f(b_i, a_i) / sum_j f(b_i, a_j) ]

with f(u, v) = exp(cos_sim(u, v) / tau); there is no extra 1/2 over the
two directions, so the singleton case is exactly 0 and the chance level
for a batch of N is 2*log(N).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .fusion import MaskScheme, ModalityId
from .tensor import Tensor

Z_EPS = 1e-8  # floor for per-dimension std in z-normalization


def sample_mask(available: Iterable[ModalityId], rng: np.random.Generator) -> MaskScheme:
    """Uniform draw over the 2^K - 2 ordered bipartitions of ``available``."""
    slots = sorted(set(available))
    k = len(slots)
    if k < 2:
        raise ContractError(
            f"a single modality admits no bipartition (got {k} available)"
        )
    code = int(rng.integers(1, 2**k - 1))
    masked = frozenset(slot for i, slot in enumerate(slots) if code & (1 << i))
    kept = frozenset(slots) - masked
    return MaskScheme(masked=masked, kept=kept)


def enumerate_masks(available: Iterable[ModalityId]) -> list[MaskScheme]:
    """All ordered bipartitions with both parts non-empty, in code order."""
    slots = sorted(set(available))
    k = len(slots)
    if k < 2:
        raise ContractError(
            f"a single modality admits no bipartition (got {k} available)"
        )
    schemes = []
    for code in range(1, 2**k - 1):
        masked = frozenset(slot for i, slot in enumerate(slots) if code & (1 << i))
        schemes.append(MaskScheme(masked=masked, kept=frozenset(slots) - masked))
    return schemes


def _normalize_rows(x: Tensor) -> Tensor:
    norms_sq = T.sum_axis(T.mul(x, x), axis=-1, keepdims=True)
    return T.div(x, T.sqrt(norms_sq))


def info_nce_symmetric(
    view_a: Tensor, view_b: Tensor, tau: Union[Tensor, float]
) -> Tensor:
    """Symmetric InfoNCE between matched rows of two projected views."""
    if not isinstance(view_a, Tensor):
        view_a = Tensor(np.asarray(view_a, dtype=np.float64))
    if not isinstance(view_b, Tensor):
        view_b = Tensor(np.asarray(view_b, dtype=np.float64))
    if view_a.data.ndim != 2 or view_b.data.ndim != 2:
        raise DimensionError(
            f"views must be (batch, width), got {view_a.data.shape} and {view_b.data.shape}"
        )
    if view_a.data.shape != view_b.data.shape:
        raise DimensionError(
            f"views disagree: {view_a.data.shape} vs {view_b.data.shape}"
        )
    if np.any(np.linalg.norm(view_a.data, axis=-1) == 0.0) or np.any(
        np.linalg.norm(view_b.data, axis=-1) == 0.0
    ):
        raise ContractError("zero-norm embedding: cosine similarity undefined")
    if isinstance(tau, Tensor):
        if np.any(tau.data <= 0):
            raise ContractError(f"temperature must be positive, got {tau.data}")
    elif tau <= 0:
        raise ContractError(f"temperature must be positive, got {tau}")

    na = _normalize_rows(view_a)
    nb = _normalize_rows(view_b)
    logits = T.div(T.pair_dots(na, nb), tau)
    diag = T.diagonal(logits)
    term_ab = T.sub(T.logsumexp_rows(logits), diag)
    term_ba = T.sub(T.logsumexp_rows(T.transpose(logits, (1, 0))), diag)
    return T.mean_all(T.add(term_ab, term_ba))


@dataclass
class LatentStats:
    """Per-modality, per-dimension normalization fitted on the training split."""

    means: dict
    stds: dict

    def transform(self, latents: Mapping[str, np.ndarray]) -> dict:
        out = {}
        for name, values in latents.items():
            mu = self.means[name]
            sd = self.stds[name]
            out[name] = (np.asarray(values, dtype=np.float64) - mu) / np.maximum(
                sd, Z_EPS
            )
        return out


def znormalize_latents(
    train_latents: Mapping[str, np.ndarray]
) -> tuple[LatentStats, dict]:
    """Fit per-dimension stats on training latents and normalize them.

    Standard deviations are population (biased) values; dimensions with
    vanishing spread map to zero via the epsilon floor.  Validation and
    test data must be transformed with the returned stats.
    """
    means = {}
    stds = {}
    for name, values in train_latents.items():
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ContractError(
                f"latents '{name}' need >= 2 training rows, got shape {arr.shape}"
            )
        means[name] = arr.mean(axis=0)
        stds[name] = arr.std(axis=0)
    stats = LatentStats(means=means, stds=stds)
    return stats, stats.transform(train_latents)


def latent_reconstruction_loss(
    recon_masked_view: Tensor,
    recon_kept_view: Tensor,
    targets: Sequence,
    num_available: Optional[int] = None,
) -> Tensor:
    """Mean over the batch of the two-view reconstruction error.

    ``targets`` lists each modality's normalized latent block (batch, w_m)
    in reconstruction-head slice order.  Per sample the loss is
    ``1/(2K) * sum_m (|r_m^M - h_m|^2 + |r_m^Mbar - h_m|^2)`` with the
    squared norm taken as a plain sum over the slice entries.
    """
    target_tensors = [
        t if isinstance(t, Tensor) else Tensor(np.asarray(t, dtype=np.float64))
        for t in targets
    ]
    widths = [t.data.shape[-1] for t in target_tensors]
    total_width = int(sum(widths))
    k = len(target_tensors) if num_available is None else int(num_available)
    for recon in (recon_masked_view, recon_kept_view):
        if recon.data.shape[-1] != total_width:
            raise DimensionError(
                f"reconstruction width {recon.data.shape[-1]} does not match "
                f"concatenated target width {total_width}"
            )
    per_sample: Optional[Tensor] = None
    for recon in (recon_masked_view, recon_kept_view):
        offset = 0
        for target, width in zip(target_tensors, widths):
            piece = T.narrow(recon, axis=-1, start=offset, stop=offset + width)
            diff = T.sub(piece, target)
            sq = T.sum_axis(T.mul(diff, diff), axis=-1)
            per_sample = sq if per_sample is None else T.add(per_sample, sq)
            offset += width
    return T.mul(T.mean_all(per_sample), 1.0 / (2.0 * k))


@dataclass(frozen=True)
class LossBreakdown:
    """One step's loss components, recorded as plain floats."""

    contrastive: float
    reconstruction: float
    total: float
    tau: float
    lam: float


def combine_losses(contrastive: Tensor, reconstruction: Tensor, lam: float) -> Tensor:
    """Graph-side weighted total ``(1 - lam) * contr + lam * recon``."""
    if not (0.0 <= lam <= 1.0):
        raise ContractError(f"lambda must lie in [0, 1], got {lam}")
    return T.add(T.mul(contrastive, 1.0 - lam), T.mul(reconstruction, lam))


def total_loss(
    contrastive: float, reconstruction: float, tau: float, lam: float
) -> LossBreakdown:
    """Record-side weighted total; same arithmetic as :func:`combine_losses`."""
    if not (0.0 <= lam <= 1.0):
        raise ContractError(f"lambda must lie in [0, 1], got {lam}")
    contrastive = float(contrastive)
    reconstruction = float(reconstruction)
    total = contrastive * (1.0 - lam) + reconstruction * lam
    return LossBreakdown(
        contrastive=contrastive,
        reconstruction=reconstruction,
        total=total,
        tau=float(tau),
        lam=float(lam),
    )

"""Token projection, masked transformer fusion, and the two decoder heads.

A ``FusionModel`` owns everything downstream of the per-modality latents:
one linear+GELU projection per modality slot, a learned positional
embedding per slot, a single pre-norm transformer block, the contrastive
head, the joint reconstruction head, and the temperature logit.

Masked slots enter the transformer as zero rows with no positional
embedding, so a masked modality contributes no learnable signal to that
view.  The fused embedding is the mean over all slot outputs, summed in
slot order so repeated evaluations are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import nn
from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor

ModalityId = int


@dataclass(frozen=True)
class MaskScheme:
    """Bipartition of one location's available modalities.

    ``masked`` and ``kept`` must be disjoint, non-empty, and together cover
    the available set.
    """

    masked: frozenset
    kept: frozenset

    def __post_init__(self):
        masked = frozenset(self.masked)
        kept = frozenset(self.kept)
        object.__setattr__(self, "masked", masked)
        object.__setattr__(self, "kept", kept)
        if not masked or not kept:
            raise ContractError("a mask scheme needs both parts non-empty")
        if masked & kept:
            raise ContractError(
                f"mask scheme parts overlap: {sorted(masked & kept)}"
            )

    @property
    def available(self) -> frozenset:
        return self.masked | self.kept

    def inverted(self) -> "MaskScheme":
        return MaskScheme(masked=self.kept, kept=self.masked)


@dataclass(frozen=True)
class FusionConfig:
    """Widths for one fusion model instance.

    ``modality_widths[m]`` is the latent width entering slot ``m``'s token
    projection; ``recon_widths[m]`` is the slice width the reconstruction
    head emits for it.  Full-scale defaults are d=768 with 8 heads and a
    512-wide contrastive head; the synthetic benchmark runs d=9, 1 head,
    contrastive width 9.
    """

    modality_widths: tuple
    recon_widths: tuple
    d: int = 768
    heads: int = 8
    contrastive_width: int = 512
    ffn_mult: int = 4
    tau_init: float = 0.07

    def __post_init__(self):
        if len(self.modality_widths) < 2:
            raise ContractError("fusion needs at least two modality slots")
        if len(self.recon_widths) != len(self.modality_widths):
            raise ContractError("recon_widths must cover every modality slot")
        if self.d % self.heads != 0:
            raise ContractError(
                f"embedding width {self.d} not divisible by {self.heads} heads"
            )
        if self.tau_init <= 0:
            raise ContractError("temperature must start positive")


class FusionModel:
    """Learnable fusion module over a fixed list of modality slots."""

    def __init__(self, config: FusionConfig, rng: np.random.Generator):
        self.config = config
        d = config.d
        self.num_slots = len(config.modality_widths)
        self.projections = [
            nn.Linear(w, d, rng) for w in config.modality_widths
        ]
        self.positions = [
            Tensor(rng.standard_normal(d) * 0.02, grad_enabled=True)
            for _ in range(self.num_slots)
        ]
        self.ln1_gain = Tensor(np.ones(d), grad_enabled=True)
        self.ln1_bias = Tensor(np.zeros(d), grad_enabled=True)
        self.wq = nn.Linear(d, d, rng)
        self.wk = nn.Linear(d, d, rng)
        self.wv = nn.Linear(d, d, rng)
        self.wo = nn.Linear(d, d, rng)
        self.ln2_gain = Tensor(np.ones(d), grad_enabled=True)
        self.ln2_bias = Tensor(np.zeros(d), grad_enabled=True)
        self.ffn1 = nn.Linear(d, config.ffn_mult * d, rng)
        self.ffn2 = nn.Linear(config.ffn_mult * d, d, rng)
        self.head_ln_gain = Tensor(np.ones(d), grad_enabled=True)
        self.head_ln_bias = Tensor(np.zeros(d), grad_enabled=True)
        self.head_out = nn.Linear(d, config.contrastive_width, rng)
        self.recon_ln_gain = Tensor(np.ones(d), grad_enabled=True)
        self.recon_ln_bias = Tensor(np.zeros(d), grad_enabled=True)
        self.recon_out = nn.Linear(d, int(sum(config.recon_widths)), rng)
        self.log_tau = Tensor(np.asarray(np.log(config.tau_init)), grad_enabled=True)
        self._recon_offsets = np.concatenate(
            ([0], np.cumsum(config.recon_widths))
        ).astype(int)

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for m, proj in enumerate(self.projections):
            params.update(nn.prefixed(f"proj{m}", proj.parameters()))
            params[f"pos{m}"] = self.positions[m]
        params["block.ln1.gain"] = self.ln1_gain
        params["block.ln1.bias"] = self.ln1_bias
        params.update(nn.prefixed("block.wq", self.wq.parameters()))
        params.update(nn.prefixed("block.wk", self.wk.parameters()))
        params.update(nn.prefixed("block.wv", self.wv.parameters()))
        params.update(nn.prefixed("block.wo", self.wo.parameters()))
        params["block.ln2.gain"] = self.ln2_gain
        params["block.ln2.bias"] = self.ln2_bias
        params.update(nn.prefixed("block.ffn1", self.ffn1.parameters()))
        params.update(nn.prefixed("block.ffn2", self.ffn2.parameters()))
        params["contrast.ln.gain"] = self.head_ln_gain
        params["contrast.ln.bias"] = self.head_ln_bias
        params.update(nn.prefixed("contrast.out", self.head_out.parameters()))
        params["recon.ln.gain"] = self.recon_ln_gain
        params["recon.ln.bias"] = self.recon_ln_bias
        params.update(nn.prefixed("recon.out", self.recon_out.parameters()))
        params["log_tau"] = self.log_tau
        return params

    def tau(self) -> Tensor:
        """Current temperature; exp of the logit keeps it positive."""
        return T.exp(self.log_tau)

    # -- forward pieces ------------------------------------------------------

    def project_modality(self, h: Tensor, modality: ModalityId) -> Tensor:
        """Latent (batch, w_m) -> token (batch, d): linear, GELU, plus slot position."""
        if not (0 <= modality < self.num_slots):
            raise ContractError(f"modality slot {modality} not configured")
        expected = self.config.modality_widths[modality]
        if h.data.shape[-1] != expected:
            raise DimensionError(
                f"modality {modality} expects latent width {expected}, "
                f"got {h.data.shape}"
            )
        return T.add(T.gelu(self.projections[modality](h)), self.positions[modality])

    def fuse(self, tokens: Mapping[ModalityId, Tensor], scheme: MaskScheme) -> Tensor:
        """Fused embedding of one masked view.

        ``tokens`` maps every available slot to its (batch, d) token.  Slots
        in ``scheme.masked`` enter as zero rows; the sequence covers the
        available set in slot order and the result is the mean over all its
        positions after one transformer block.
        """
        return self.fuse_views_stacked(tokens, [scheme])

    def fuse_views_stacked(
        self, tokens: Mapping[ModalityId, Tensor], schemes
    ) -> Tensor:
        """Fused embeddings for several mask views of one token batch.

        Equivalent to stacking ``fuse(tokens, s)`` for each scheme along the
        batch axis, but runs the transformer once on all views, which is
        what the training step (two complementary views) and the all-scheme
        validation sweep want.  Returns a (len(schemes) * batch, d) tensor;
        view ``i`` occupies rows ``[i * batch, (i + 1) * batch)``.
        """
        schemes = list(schemes)
        if not schemes:
            raise ContractError("fuse_views_stacked needs at least one scheme")
        available = schemes[0].available
        for scheme in schemes:
            if scheme.available != available:
                raise ContractError(
                    "fuse_views_stacked schemes must share an availability set"
                )
            for slot in scheme.available:
                if not (0 <= slot < self.num_slots):
                    raise ContractError(f"scheme references unconfigured slot {slot}")
            missing = [slot for slot in scheme.kept if slot not in tokens]
            if missing:
                raise ContractError(
                    f"scheme keeps modalities without tokens: {sorted(missing)}"
                )
        slots = sorted(available)
        batch = tokens[min(schemes[0].kept)].data.shape[0]
        d = self.config.d
        reshaped = {
            slot: T.reshape(tokens[slot], (batch, 1, d))
            for slot in slots
            if slot in tokens
        }
        zero_row = Tensor(np.zeros((batch, 1, d)))
        views = []
        for scheme in schemes:
            rows = [
                reshaped[slot] if slot in scheme.kept else zero_row for slot in slots
            ]
            views.append(T.concat(rows, axis=1))
        x = views[0] if len(views) == 1 else T.concat(views, axis=0)
        return T.mean_axis(self._block(x), axis=1)

    def fuse_views(
        self, tokens: Mapping[ModalityId, Tensor], schemes
    ) -> list[Tensor]:
        """Per-scheme fused embeddings via one stacked transformer pass."""
        schemes = list(schemes)
        pooled = self.fuse_views_stacked(tokens, schemes)
        batch = pooled.data.shape[0] // len(schemes)
        return [
            T.narrow(pooled, axis=0, start=i * batch, stop=(i + 1) * batch)
            for i in range(len(schemes))
        ]

    def fuse_all(self, tokens: Mapping[ModalityId, Tensor]) -> Tensor:
        """Downstream embedding: fuse every provided token with nothing masked."""
        if not tokens:
            raise ContractError("fuse_all needs at least one token")
        for slot in tokens:
            if not (0 <= slot < self.num_slots):
                raise ContractError(f"token for unconfigured slot {slot}")
        slots = sorted(tokens)
        batch = tokens[slots[0]].data.shape[0]
        d = self.config.d
        rows = [T.reshape(tokens[slot], (batch, 1, d)) for slot in slots]
        x = rows[0] if len(rows) == 1 else T.concat(rows, axis=1)
        x = self._block(x)
        return T.mean_axis(x, axis=1)

    def _block(self, x: Tensor) -> Tensor:
        b, k, d = x.data.shape
        heads = self.config.heads
        hd = d // heads

        h = T.layer_norm(x, self.ln1_gain, self.ln1_bias)
        q = self._split_heads(self.wq(h), b, k, heads, hd)
        key = self._split_heads(self.wk(h), b, k, heads, hd)
        v = self._split_heads(self.wv(h), b, k, heads, hd)
        scores = T.mul(
            T.matmul(q, T.transpose(key, (0, 1, 3, 2))), 1.0 / np.sqrt(hd)
        )
        attn = T.softmax_rows(scores)
        ctx = T.matmul(attn, v)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, k, d))
        x = T.add(x, self.wo(ctx))

        h2 = T.layer_norm(x, self.ln2_gain, self.ln2_bias)
        f = self.ffn2(T.gelu(self.ffn1(h2)))
        return T.add(x, f)

    @staticmethod
    def _split_heads(t: Tensor, b: int, k: int, heads: int, hd: int) -> Tensor:
        return T.transpose(T.reshape(t, (b, k, heads, hd)), (0, 2, 1, 3))

    def contrastive_head(self, z: Tensor) -> Tensor:
        """Shared decoder applied to a fused embedding before the InfoNCE loss."""
        h = T.layer_norm(z, self.head_ln_gain, self.head_ln_bias)
        return self.head_out(T.gelu(h))

    def reconstruction_head(self, z: Tensor) -> Tensor:
        """Joint latent reconstruction; per-modality slices via recon_slice."""
        h = T.layer_norm(z, self.recon_ln_gain, self.recon_ln_bias)
        return self.recon_out(T.gelu(h))

    def recon_slice(self, recon: Tensor, modality: ModalityId) -> Tensor:
        """Slice of the joint reconstruction belonging to one modality."""
        start = int(self._recon_offsets[modality])
        stop = int(self._recon_offsets[modality + 1])
        return T.narrow(recon, axis=-1, start=start, stop=stop)


def project_modality(h: Tensor, model: FusionModel, modality: ModalityId) -> Tensor:
    return model.project_modality(h, modality)


def fuse(
    tokens: Mapping[ModalityId, Tensor], scheme: MaskScheme, model: FusionModel
) -> Tensor:
    return model.fuse(tokens, scheme)


def contrastive_head(z: Tensor, model: FusionModel) -> Tensor:
    return model.contrastive_head(z)


def reconstruction_head(z: Tensor, model: FusionModel) -> Tensor:
    return model.reconstruction_head(z)

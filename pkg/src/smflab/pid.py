"""Synthetic benchmark probing what trained location embeddings retain.

Each location on a 200x200 grid carries two 3-vector modalities.  Their
first two dimensions are shared min-max-normalized coordinates (redundant
by construction); the third is noise that is batch-augmented during
training (one shared draw per batch per modality) so it carries zero
mutual information with location, making it a purely modality-unique
signal.  Ridge probes then measure how much of the redundant, unique and
synergistic (sum of both unique dims) content each trained model's
embedding exposes, alongside the first-layer weight share that the
modality encoders assign to the unique dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import nn
from . import tensor as T
from .errors import ContractError
from .fusion import FusionConfig, FusionModel
from .geo import (
    SYNTHETIC_HIDDEN,
    DEFAULT_SCALES,
    GeoCoordinate,
    LocationEncoder,
    equal_earth_project_arrays,
)
from .objective import (
    LatentStats,
    combine_losses,
    enumerate_masks,
    info_nce_symmetric,
    latent_reconstruction_loss,
    sample_mask,
    total_loss,
    znormalize_latents,
)
from .probe import DEFAULT_ALPHAS, kfold_ridge_r2
from .tensor import Tensor
from .training import (
    COORDS_MODALITY,
    AvailabilityProfile,
    TrainConfig,
    train_smf,
)

BASELINE_KINDS = (
    "smf_full",
    "smf_contrastive_only",
    "smf_reconstruction_only",
    "pairwise_contrastive",
    "unimodal_contrastive",
)

PID_TASKS = ("redundancy", "uniqueness", "synergy")
WEIGHT_SHARE_ROW = "unique_weight_share"

# Stream tags for deriving sub-generators from one experiment seed.
STREAM_DATA = 0
STREAM_INIT = 1
STREAM_LOOP = 2
STREAM_FOLDS = 3

MOD_WIDTH = 3
MOD_HIDDEN = 4
REPR_WIDTH = 9
COORDS_RECON_WIDTH = 2  # projected (x, y) slice in the reconstruction target

SPLIT_TRAIN = "train"
SPLIT_VAL = "val"
SPLIT_HOLDOUT = "holdout_region"


def stream_rng(seed: int, *tags: int) -> np.random.Generator:
    """Named sub-stream of the experiment seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, tags)]))


def stream_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, tags)]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class SyntheticSample:
    location: GeoCoordinate
    mod1: np.ndarray
    mod2: np.ndarray
    split: str


class SyntheticDataset:
    """Column-array view of the synthetic grid."""

    def __init__(self, lat, lon, mod1, mod2, split, seed: int):
        self.lat = np.asarray(lat, dtype=np.float64)
        self.lon = np.asarray(lon, dtype=np.float64)
        self.mod1 = np.asarray(mod1, dtype=np.float64)
        self.mod2 = np.asarray(mod2, dtype=np.float64)
        self.split = np.asarray(split)
        self.seed = int(seed)
        x, y = equal_earth_project_arrays(self.lat, self.lon)
        self.proj = np.stack([x, y], axis=-1)

    def __len__(self) -> int:
        return self.lat.shape[0]

    def indices(self, split: str) -> np.ndarray:
        return np.nonzero(self.split == split)[0]

    def sample(self, i: int) -> SyntheticSample:
        return SyntheticSample(
            location=GeoCoordinate(float(self.lat[i]), float(self.lon[i])),
            mod1=self.mod1[i].copy(),
            mod2=self.mod2[i].copy(),
            split=str(self.split[i]),
        )

    CSV_COLUMNS = ("lat", "lon", "m1_1", "m1_2", "m1_3", "m2_1", "m2_2", "m2_3", "split")

    def to_csv(self, path) -> None:
        from .training import format_float

        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.CSV_COLUMNS) + "\n")
            for i in range(len(self)):
                cells = [format_float(self.lat[i]), format_float(self.lon[i])]
                cells += [format_float(v) for v in self.mod1[i]]
                cells += [format_float(v) for v in self.mod2[i]]
                cells.append(str(self.split[i]))
                fh.write(",".join(cells) + "\n")

    @classmethod
    def from_csv(cls, path, seed: int = -1) -> "SyntheticDataset":
        lat, lon, m1, m2, split = [], [], [], [], []
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != cls.CSV_COLUMNS:
                raise ContractError(f"unexpected dataset columns: {header}")
            for line in fh:
                cells = line.rstrip("\n").split(",")
                lat.append(float(cells[0]))
                lon.append(float(cells[1]))
                m1.append([float(c) for c in cells[2:5]])
                m2.append([float(c) for c in cells[5:8]])
                split.append(cells[8])
        return cls(lat, lon, m1, m2, split, seed=seed)


def generate_synthetic_dataset(
    seed: int,
    grid_n: int = 200,
    lat_range: tuple = (36.9, 37.1),
    lon_range: tuple = (-122.1, -121.9),
    train_fraction: float = 0.8,
) -> SyntheticDataset:
    """Equally spaced grid with redundant, unique and held-out structure.

    The third quadrant (lower lat half x lower lon half, half-open) is
    tagged ``holdout_region``; the rest splits into train/val by a seeded
    shuffle.  Redundant dims are the min-max-normalized (lat, lon) shared
    verbatim by both modalities; unique dims hold per-location uniform
    draws, which are the frozen inference-time values.
    """
    lat_axis = np.linspace(lat_range[0], lat_range[1], grid_n)
    lon_axis = np.linspace(lon_range[0], lon_range[1], grid_n)
    lat_grid, lon_grid = np.meshgrid(lat_axis, lon_axis, indexing="ij")
    lat = lat_grid.ravel()
    lon = lon_grid.ravel()
    n = lat.size

    rlat = (lat - lat_range[0]) / (lat_range[1] - lat_range[0])
    rlon = (lon - lon_range[0]) / (lon_range[1] - lon_range[0])

    rng = stream_rng(seed, STREAM_DATA)
    unique = rng.uniform(0.0, 1.0, size=(n, 2))

    mod1 = np.stack([rlat, rlon, unique[:, 0]], axis=-1)
    mod2 = np.stack([rlat, rlon, unique[:, 1]], axis=-1)

    lat_mid = 0.5 * (lat_range[0] + lat_range[1])
    lon_mid = 0.5 * (lon_range[0] + lon_range[1])
    holdout = (lat < lat_mid) & (lon < lon_mid)

    split = np.empty(n, dtype=object)
    split[holdout] = SPLIT_HOLDOUT
    rest = np.nonzero(~holdout)[0]
    order = rng.permutation(rest)
    n_train = int(round(train_fraction * rest.size))
    split[order[:n_train]] = SPLIT_TRAIN
    split[order[n_train:]] = SPLIT_VAL

    return SyntheticDataset(lat, lon, mod1, mod2, split.astype(str), seed=seed)


# ---------------------------------------------------------------------------
# batches and augmentation


@dataclass
class SyntheticBatch:
    indices: np.ndarray
    availability: frozenset
    lat: np.ndarray
    lon: np.ndarray
    mod1: np.ndarray
    mod2: np.ndarray
    proj: np.ndarray
    from_train_split: bool
    augmented: bool = False
    targets: Optional[dict] = None  # z-scored latents, filled by the data source


def augment_batch_unique(batch: SyntheticBatch, rng: np.random.Generator) -> SyntheticBatch:
    """Overwrite each modality's unique dim with one shared uniform draw.

    Training-mode only: the per-batch constant is what severs the mutual
    information between the unique dim and location.  The two modalities
    get independent draws (a shared draw would make the synergy target
    degenerate during training).
    """
    if not batch.from_train_split:
        raise ContractError("batch augmentation is training-mode only")
    draws = rng.uniform(0.0, 1.0, size=2)
    mod1 = batch.mod1.copy()
    mod2 = batch.mod2.copy()
    mod1[:, 2] = draws[0]
    mod2[:, 2] = draws[1]
    return SyntheticBatch(
        indices=batch.indices,
        availability=batch.availability,
        lat=batch.lat,
        lon=batch.lon,
        mod1=mod1,
        mod2=mod2,
        proj=batch.proj,
        from_train_split=batch.from_train_split,
        augmented=True,
        targets=batch.targets,
    )


class SyntheticTrainingData:
    """Feeds same-availability batches with z-scored reconstruction targets.

    Normalization stats are fitted once on the raw training split; training
    batches are augmented before the targets are computed, validation and
    holdout batches never are.
    """

    LATENT_NAMES = ("coords", "mod1", "mod2")

    def __init__(
        self,
        dataset: SyntheticDataset,
        train_profile: Optional[AvailabilityProfile] = None,
        val_profile: Optional[AvailabilityProfile] = None,
    ):
        self.dataset = dataset
        self.train_indices = dataset.indices(SPLIT_TRAIN)
        self.val_indices = dataset.indices(SPLIT_VAL)
        num_modalities = 3
        if train_profile is None:
            train_profile = AvailabilityProfile.all_modalities(
                len(self.train_indices), num_modalities
            )
        if val_profile is None:
            val_profile = AvailabilityProfile.all_modalities(
                len(self.val_indices), num_modalities
            )
        if len(train_profile.sets) != len(self.train_indices):
            raise ContractError("train availability profile length mismatch")
        if len(val_profile.sets) != len(self.val_indices):
            raise ContractError("val availability profile length mismatch")
        self.train_profile = train_profile
        self.val_profile = val_profile
        self.stats, _ = znormalize_latents(
            {
                "coords": dataset.proj[self.train_indices],
                "mod1": dataset.mod1[self.train_indices],
                "mod2": dataset.mod2[self.train_indices],
            }
        )
        self._train_set = frozenset(self.train_indices.tolist())

    def train_groups(self) -> dict:
        groups = self.train_profile.groups()
        return {
            key: self.train_indices[local] for key, local in groups.items()
        }

    def val_groups(self) -> dict:
        groups = self.val_profile.groups()
        return {key: self.val_indices[local] for key, local in groups.items()}

    def make_batch(
        self,
        availability: frozenset,
        indices: np.ndarray,
        train: bool,
        rng: Optional[np.random.Generator] = None,
    ) -> SyntheticBatch:
        ds = self.dataset
        batch = SyntheticBatch(
            indices=np.asarray(indices),
            availability=frozenset(availability),
            lat=ds.lat[indices],
            lon=ds.lon[indices],
            mod1=ds.mod1[indices],
            mod2=ds.mod2[indices],
            proj=ds.proj[indices],
            from_train_split=bool(np.all(ds.split[indices] == SPLIT_TRAIN)),
        )
        if train:
            if rng is None:
                raise ContractError("training batches need the loop generator")
            batch = augment_batch_unique(batch, rng)
        batch.targets = self.stats.transform(
            {"coords": batch.proj, "mod1": batch.mod1, "mod2": batch.mod2}
        )
        return batch


def _inference_batch(
    dataset: SyntheticDataset, indices: np.ndarray, num_modalities: int
) -> SyntheticBatch:
    """Un-augmented batch with the dataset's frozen per-location values."""
    indices = np.asarray(indices)
    return SyntheticBatch(
        indices=indices,
        availability=frozenset(range(num_modalities)),
        lat=dataset.lat[indices],
        lon=dataset.lon[indices],
        mod1=dataset.mod1[indices],
        mod2=dataset.mod2[indices],
        proj=dataset.proj[indices],
        from_train_split=False,
    )


# ---------------------------------------------------------------------------
# models


class _LocationFeatureMixin:
    """Shared handling of the frozen per-location Fourier feature blocks."""

    loc: LocationEncoder

    def __init__(self):
        self._feature_cache: Optional[np.ndarray] = None
        self._cache_pos: Optional[np.ndarray] = None
        self._cache_key: Optional[int] = None

    def ensure_features(self, dataset: SyntheticDataset) -> None:
        """Precompute RFF blocks for the rows the training loop touches."""
        key = id(dataset)
        if self._cache_key == key:
            return
        rows = np.sort(
            np.concatenate([dataset.indices(SPLIT_TRAIN), dataset.indices(SPLIT_VAL)])
        )
        self._feature_cache = self.loc.features(dataset.lat[rows], dataset.lon[rows])
        pos = np.full(len(dataset), -1, dtype=np.int64)
        pos[rows] = np.arange(rows.size)
        self._cache_pos = pos
        self._cache_key = key

    def release_features(self) -> None:
        self._feature_cache = None
        self._cache_pos = None
        self._cache_key = None

    def _loc_blocks(self, batch: SyntheticBatch) -> np.ndarray:
        if self._feature_cache is not None:
            pos = self._cache_pos[batch.indices]
            if np.all(pos >= 0):
                return self._feature_cache[:, pos]
        return self.loc.features(batch.lat, batch.lon)

    def coords_latent(self, batch: SyntheticBatch) -> Tensor:
        return self.loc.encode_features(self._loc_blocks(batch))


class SmfSyntheticModel(_LocationFeatureMixin):
    """Masked-fusion model at benchmark scale.

    Slot 0 is coordinates (location-encoder latent, width 9), slots 1 and 2
    are the two synthetic modalities whose latents are the width-4 hidden
    activations of their encoders.  Reconstruction targets are the z-scored
    projected coordinates (2) plus both raw modality vectors (3 + 3).
    """

    def __init__(
        self,
        seed: int,
        lam: float,
        d: int = REPR_WIDTH,
        heads: int = 1,
        contrastive_width: int = REPR_WIDTH,
        tau_init: float = 0.07,
        loc_hidden: Sequence[int] = SYNTHETIC_HIDDEN,
        scales: Sequence[float] = DEFAULT_SCALES,
    ):
        super().__init__()
        if not (0.0 <= lam <= 1.0):
            raise ContractError(f"lambda must lie in [0, 1], got {lam}")
        self.lam = float(lam)
        init = stream_rng(seed, STREAM_INIT)
        loc_seed = int(init.integers(0, 2**63 - 1))
        self.loc = LocationEncoder(
            out_width=d, seed=loc_seed, scales=scales, hidden=loc_hidden
        )
        self.mod_encoders = [
            nn.Linear(MOD_WIDTH, MOD_HIDDEN, init) for _ in range(2)
        ]
        self.fusion = FusionModel(
            FusionConfig(
                modality_widths=(d, MOD_HIDDEN, MOD_HIDDEN),
                recon_widths=(COORDS_RECON_WIDTH, MOD_WIDTH, MOD_WIDTH),
                d=d,
                heads=heads,
                contrastive_width=contrastive_width,
                tau_init=tau_init,
            ),
            init,
        )
        self.num_modalities = 3

    def parameters(self) -> dict:
        params = {}
        params.update(nn.prefixed("loc", self.loc.parameters()))
        for i, enc in enumerate(self.mod_encoders):
            params.update(nn.prefixed(f"mod{i + 1}", enc.parameters()))
        params.update(nn.prefixed("fusion", self.fusion.parameters()))
        return params

    def first_layer_weights(self) -> list:
        return [enc.weight.data for enc in self.mod_encoders]

    def _tokens(self, batch: SyntheticBatch) -> dict:
        tokens = {}
        if COORDS_MODALITY in batch.availability:
            tokens[COORDS_MODALITY] = self.fusion.project_modality(
                self.coords_latent(batch), COORDS_MODALITY
            )
        for slot, values in ((1, batch.mod1), (2, batch.mod2)):
            if slot in batch.availability:
                hidden = T.gelu(self.mod_encoders[slot - 1](Tensor(values)))
                tokens[slot] = self.fusion.project_modality(hidden, slot)
        return tokens

    def _restrict_recon(self, recon: Tensor, availability: frozenset) -> Tensor:
        """Joint reconstruction restricted to the available modalities."""
        if len(availability) == self.num_modalities:
            return recon
        pieces = [self.fusion.recon_slice(recon, m) for m in sorted(availability)]
        return T.concat(pieces, axis=-1)

    def _targets(self, batch: SyntheticBatch) -> list:
        names = {0: "coords", 1: "mod1", 2: "mod2"}
        return [batch.targets[names[m]] for m in sorted(batch.availability)]

    def training_loss(self, batch: SyntheticBatch, rng: np.random.Generator):
        tokens = self._tokens(batch)
        scheme = sample_mask(batch.availability, rng)
        n = batch.indices.shape[0]
        pooled = self.fusion.fuse_views_stacked(tokens, [scheme, scheme.inverted()])
        proj = self.fusion.contrastive_head(pooled)
        recon_out = self.fusion.reconstruction_head(pooled)
        tau = self.fusion.tau()
        contr = info_nce_symmetric(
            T.narrow(proj, 0, 0, n), T.narrow(proj, 0, n, 2 * n), tau
        )
        targets = self._targets(batch)
        recon = latent_reconstruction_loss(
            self._restrict_recon(T.narrow(recon_out, 0, 0, n), batch.availability),
            self._restrict_recon(T.narrow(recon_out, 0, n, 2 * n), batch.availability),
            targets,
            num_available=len(batch.availability),
        )
        loss = combine_losses(contr, recon, self.lam)
        breakdown = total_loss(contr.item(), recon.item(), tau.item(), self.lam)
        return loss, breakdown

    def validation_batch_loss(self, batch: SyntheticBatch) -> float:
        tokens = self._tokens(batch)
        targets = self._targets(batch)
        tau = self.fusion.tau()
        n = batch.indices.shape[0]
        schemes = enumerate_masks(batch.availability)
        # One stacked pass over every distinct visible subset; each unordered
        # bipartition is evaluated once and counted twice (the total loss is
        # exactly symmetric in the two views).
        pooled = self.fusion.fuse_views_stacked(tokens, schemes)
        proj = self.fusion.contrastive_head(pooled)
        recon_out = self.fusion.reconstruction_head(pooled)
        heads = {}
        recons = {}
        for i, scheme in enumerate(schemes):
            visible = scheme.kept
            heads[visible] = T.narrow(proj, 0, i * n, (i + 1) * n)
            recons[visible] = self._restrict_recon(
                T.narrow(recon_out, 0, i * n, (i + 1) * n), batch.availability
            )
        totals = []
        for scheme in schemes:
            a, b = scheme.masked, scheme.kept
            if min(a) > min(b):
                continue  # symmetric partner already counted below
            contr = info_nce_symmetric(heads[a], heads[b], tau)
            recon = latent_reconstruction_loss(
                recons[a], recons[b], targets, num_available=len(batch.availability)
            )
            value = total_loss(contr.item(), recon.item(), tau.item(), self.lam).total
            totals.append(value)
            totals.append(value)
        return float(np.mean(totals))

    def embedding(self, dataset: SyntheticDataset, indices: np.ndarray) -> np.ndarray:
        """Downstream fused embedding from all available modalities, no mask."""
        batch = _inference_batch(dataset, indices, self.num_modalities)
        return self.fusion.fuse_all(self._tokens(batch)).data


class _ContrastiveBaseline(_LocationFeatureMixin):
    """Shared plumbing for the independent-encoder contrastive baselines."""

    def __init__(
        self,
        seed: int,
        kind: str,
        loc_hidden: Sequence[int] = SYNTHETIC_HIDDEN,
        scales: Sequence[float] = DEFAULT_SCALES,
        tau_init: float = 0.07,
        width: int = REPR_WIDTH,
    ):
        super().__init__()
        self.kind = kind
        init = stream_rng(seed, STREAM_INIT)
        loc_seed = int(init.integers(0, 2**63 - 1))
        self.loc = LocationEncoder(
            out_width=width, seed=loc_seed, scales=scales, hidden=loc_hidden
        )
        n_mods = 2 if kind == "pairwise_contrastive" else 1
        self.mod_encoders = [
            nn.Mlp((MOD_WIDTH, MOD_HIDDEN, width), init) for _ in range(n_mods)
        ]
        self.log_tau = Tensor(np.asarray(np.log(tau_init)), grad_enabled=True)

    def parameters(self) -> dict:
        params = {}
        params.update(nn.prefixed("loc", self.loc.parameters()))
        for i, enc in enumerate(self.mod_encoders):
            params.update(nn.prefixed(f"mod{i + 1}", enc.parameters()))
        params["log_tau"] = self.log_tau
        return params

    def first_layer_weights(self) -> list:
        return [enc.layers[0].weight.data for enc in self.mod_encoders]

    def _encoder_outputs(self, batch: SyntheticBatch) -> list:
        outs = [self.coords_latent(batch)]
        mods = (batch.mod1, batch.mod2)
        for i, enc in enumerate(self.mod_encoders):
            outs.append(enc(Tensor(mods[i])))
        return outs

    def _loss(self, batch: SyntheticBatch):
        outs = self._encoder_outputs(batch)
        tau = T.exp(self.log_tau)
        terms = None
        for i in range(len(outs)):
            for j in range(i + 1, len(outs)):
                term = info_nce_symmetric(outs[i], outs[j], tau)
                terms = term if terms is None else T.add(terms, term)
        return terms, tau

    def training_loss(self, batch: SyntheticBatch, rng: np.random.Generator):
        loss, tau = self._loss(batch)
        breakdown = total_loss(loss.item(), 0.0, tau.item(), 0.0)
        return loss, breakdown

    def validation_batch_loss(self, batch: SyntheticBatch) -> float:
        loss, _ = self._loss(batch)
        return loss.item()

    def embedding(self, dataset: SyntheticDataset, indices: np.ndarray) -> np.ndarray:
        batch = _inference_batch(dataset, indices, 3)
        outs = self._encoder_outputs(batch)
        return np.concatenate([out.data for out in outs], axis=-1)


def build_baseline(kind: str, seed: int, lam: float = 0.0625, **arch) -> object:
    """Construct one benchmark model with its loss wiring.

    smf_* kinds share the fusion architecture and differ only in the loss
    weight (lam, 0, 1); the contrastive baselines use independent encoders
    with InfoNCE over every encoder pair (all three pairs for the pairwise
    kind, location-vs-modality-1 for the unimodal kind).
    """
    if kind == "smf_full":
        return SmfSyntheticModel(seed, lam=lam, **arch)
    if kind == "smf_contrastive_only":
        return SmfSyntheticModel(seed, lam=0.0, **arch)
    if kind == "smf_reconstruction_only":
        return SmfSyntheticModel(seed, lam=1.0, **arch)
    if kind in ("pairwise_contrastive", "unimodal_contrastive"):
        return _ContrastiveBaseline(seed, kind, **arch)
    raise ContractError(f"unknown baseline kind '{kind}'")


# ---------------------------------------------------------------------------
# training wrapper


@dataclass
class BaselineRun:
    kind: str
    seed: int
    model: object
    history: list
    epochs: Optional[int] = None  # set when restored from a checkpoint

    @property
    def epochs_trained(self) -> int:
        return len(self.history) if self.epochs is None else self.epochs


def synthetic_train_config(
    kind: str,
    epochs: int = 250,
    batch_size: int = 256,
    base_lr: float = 3e-4,
    momentum: float = 0.9,
) -> TrainConfig:
    """Benchmark optimizer settings: plain SGD + momentum, cosine decay,
    no warm-up, no weight decay, validation every epoch."""
    return TrainConfig(
        epochs=epochs,
        batch_size=batch_size,
        optimizer="sgd_momentum",
        base_lr=base_lr,
        momentum=momentum,
        weight_decay=0.0,
        warmup=0.0,
        val_every=1,
        early_stop_patience=None,
        run_id=kind,
    )


def train_baseline(
    kind: str,
    dataset: SyntheticDataset,
    seed: int,
    epochs: int = 250,
    lam: float = 0.0625,
    config: Optional[TrainConfig] = None,
    checkpoint_path=None,
    config_fingerprint: str = "",
    **arch,
) -> BaselineRun:
    """Build, train and return one baseline under the benchmark settings."""
    model = build_baseline(kind, seed, lam=lam, **arch)
    data = SyntheticTrainingData(dataset)
    if config is None:
        config = synthetic_train_config(kind, epochs=epochs)
    loop_rng = stream_rng(seed, STREAM_LOOP, BASELINE_KINDS.index(kind))
    model.ensure_features(dataset)
    try:
        history = train_smf(
            model,
            data,
            config,
            loop_rng,
            checkpoint_path=checkpoint_path,
            config_fingerprint=config_fingerprint,
        )
    finally:
        model.release_features()
    return BaselineRun(kind=kind, seed=seed, model=model, history=history)


# ---------------------------------------------------------------------------
# probes and the report


def first_layer_unique_weight_share(model) -> float:
    """Mean share of first-layer weight mass on the unique (third) input dim.

    Per modality encoder: mean |column for dim 3| over the sum of the three
    per-input-dim mean magnitudes (weights stored input-first).
    """
    shares = []
    for weight in model.first_layer_weights():
        shares.append(unique_weight_share(weight))
    return float(np.mean(shares))


def unique_weight_share(weight: np.ndarray, input_axis: int = 0) -> float:
    weight = np.asarray(weight, dtype=np.float64)
    if weight.shape[input_axis] != MOD_WIDTH:
        raise ContractError(
            f"expected {MOD_WIDTH} input dims on axis {input_axis}, got {weight.shape}"
        )
    mags = np.abs(weight).mean(axis=1 - input_axis)
    denom = float(mags.sum())
    if denom == 0.0:
        return 0.0
    return float(mags[2] / denom)


@dataclass
class PidReport:
    """Held-out probe scores per baseline kind."""

    scores: dict  # kind -> {task: value, ..., "unique_weight_share": value}

    def rows(self) -> list:
        out = []
        for kind in self.scores:
            for task in PID_TASKS:
                out.append((kind, task, self.scores[kind][task], None))
            out.append((kind, WEIGHT_SHARE_ROW, None, self.scores[kind][WEIGHT_SHARE_ROW]))
        return out

    def to_csv(self, path) -> None:
        from .training import format_float

        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("kind,task,r2,weight_share\n")
            for kind, task, r2, share in self.rows():
                fh.write(
                    ",".join(
                        [
                            kind,
                            task,
                            "" if r2 is None else format_float(r2),
                            "" if share is None else format_float(share),
                        ]
                    )
                    + "\n"
                )

    @classmethod
    def from_csv(cls, path) -> "PidReport":
        scores: dict = {}
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline()
            if header.strip() != "kind,task,r2,weight_share":
                raise ContractError(f"unexpected report columns: {header!r}")
            for line in fh:
                kind, task, r2, share = line.rstrip("\n").split(",")
                entry = scores.setdefault(kind, {})
                entry[task] = float(share) if task == WEIGHT_SHARE_ROW else float(r2)
        return cls(scores=scores)


def run_pid_probes(
    runs: Sequence[BaselineRun],
    dataset: SyntheticDataset,
    fold_seed: Optional[int] = None,
    alphas=DEFAULT_ALPHAS,
    k: int = 5,
) -> PidReport:
    """Probe every trained baseline on held-out in-region locations.

    Embeddings are computed with the frozen per-location unique dims (the
    inference-time values).  Redundancy averages the two coordinate
    regressions, uniqueness the two per-modality unique-dim regressions;
    synergy targets their sum.  All probes are k-fold ridge with the shared
    fold split.
    """
    val_idx = dataset.indices(SPLIT_VAL)
    if fold_seed is None:
        fold_seed = stream_seed(dataset.seed, STREAM_FOLDS)
    targets = {
        "lat": dataset.lat[val_idx],
        "lon": dataset.lon[val_idx],
        "u1": dataset.mod1[val_idx, 2],
        "u2": dataset.mod2[val_idx, 2],
    }
    synergy_target = targets["u1"] + targets["u2"]

    scores: dict = {}
    for run in runs:
        if run.epochs_trained == 0:
            raise ContractError(
                f"baseline '{run.kind}' is untrained; probes need trained models"
            )
        emb = run.model.embedding(dataset, val_idx)

        def probe(y):
            r2, _ = kfold_ridge_r2(emb, y, k=k, alphas=alphas, seed=fold_seed)
            return r2

        redundancy = 0.5 * (probe(targets["lat"]) + probe(targets["lon"]))
        uniqueness = 0.5 * (probe(targets["u1"]) + probe(targets["u2"]))
        synergy = probe(synergy_target)
        scores[run.kind] = {
            "redundancy": redundancy,
            "uniqueness": uniqueness,
            "synergy": synergy,
            WEIGHT_SHARE_ROW: first_layer_unique_weight_share(run.model),
        }
    return PidReport(scores=scores)

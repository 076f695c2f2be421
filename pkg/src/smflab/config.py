"""Experiment configuration: one flat JSON document, strictly validated.

All randomness flows from the single ``seed`` through named sub-streams
(data, init, loop/masks, folds, availability), so a config plus this
package version pins every byte of the outputs.  The fingerprint is the
sha256 of the canonical JSON form and is stamped into checkpoints.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from typing import Optional

from .errors import ConfigError
from .pid import BASELINE_KINDS
from .training import TrainConfig

AVAILABILITY_REGIMES = ("all", "partial", "bimodal")


@dataclass
class ExperimentConfig:
    seed: int = 0
    # dataset
    grid_n: int = 200
    lat_min: float = 36.9
    lat_max: float = 37.1
    lon_min: float = -122.1
    lon_max: float = -121.9
    train_fraction: float = 0.8
    # model
    d: int = 9
    heads: int = 1
    contrastive_width: int = 9
    loc_hidden: list = field(default_factory=lambda: [128, 128])
    scales: list = field(default_factory=lambda: [1.0, 16.0, 256.0])
    lam: float = 0.0625
    tau_init: float = 0.07
    # optimizer
    optimizer: str = "sgd_momentum"
    base_lr: float = 3e-4
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    epochs: int = 250
    batch_size: int = 256
    warmup: float = 0.0
    val_every: int = 1
    early_stop_patience: Optional[int] = None
    # experiment
    availability: str = "all"
    kinds: list = field(default_factory=lambda: list(BASELINE_KINDS))
    out_dir: str = "out"

    # -- validation -----------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        def check(cond, name, message):
            if not cond:
                raise ConfigError(name, message)

        check(isinstance(self.seed, int), "seed", "must be an integer")
        check(
            isinstance(self.grid_n, int) and self.grid_n >= 2,
            "grid_n",
            "must be an integer >= 2",
        )
        check(self.lat_min < self.lat_max, "lat_min", "requires lat_min < lat_max")
        check(self.lon_min < self.lon_max, "lon_min", "requires lon_min < lon_max")
        check(
            -90.0 <= self.lat_min and self.lat_max <= 90.0,
            "lat_max",
            "latitudes must stay in [-90, 90]",
        )
        check(
            -180.0 <= self.lon_min and self.lon_max <= 180.0,
            "lon_max",
            "longitudes must stay in [-180, 180]",
        )
        check(
            0.0 < self.train_fraction < 1.0,
            "train_fraction",
            "must lie strictly between 0 and 1",
        )
        check(self.d >= 1, "d", "must be positive")
        check(
            self.heads >= 1 and self.d % self.heads == 0,
            "heads",
            f"must divide d={self.d}",
        )
        check(self.contrastive_width >= 1, "contrastive_width", "must be positive")
        check(
            isinstance(self.loc_hidden, list)
            and all(isinstance(w, int) and w >= 1 for w in self.loc_hidden),
            "loc_hidden",
            "must be a list of positive integers",
        )
        check(
            isinstance(self.scales, list)
            and len(self.scales) >= 1
            and all(s > 0 for s in self.scales),
            "scales",
            "must be a non-empty list of positive numbers",
        )
        check(0.0 <= self.lam <= 1.0, "lam", "must lie in [0, 1]")
        check(self.tau_init > 0.0, "tau_init", "must be positive")
        check(
            self.optimizer in ("sgd_momentum", "adamw"),
            "optimizer",
            "must be 'sgd_momentum' or 'adamw'",
        )
        check(self.base_lr >= 0.0, "base_lr", "must be nonnegative")
        check(self.weight_decay >= 0.0, "weight_decay", "must be nonnegative")
        check(
            isinstance(self.epochs, int) and self.epochs >= 0,
            "epochs",
            "must be a nonnegative integer",
        )
        check(
            isinstance(self.batch_size, int) and self.batch_size >= 1,
            "batch_size",
            "must be a positive integer",
        )
        check(0.0 <= self.warmup <= 1.0, "warmup", "fraction must lie in [0, 1]")
        check(
            isinstance(self.val_every, int) and self.val_every >= 0,
            "val_every",
            "must be a nonnegative integer (0 disables validation)",
        )
        if self.early_stop_patience is not None:
            check(
                isinstance(self.early_stop_patience, int)
                and self.early_stop_patience >= 0,
                "early_stop_patience",
                "must be null or a nonnegative integer",
            )
        check(
            self.availability in AVAILABILITY_REGIMES,
            "availability",
            f"must be one of {AVAILABILITY_REGIMES}",
        )
        check(
            isinstance(self.kinds, list) and len(self.kinds) >= 1,
            "kinds",
            "must list at least one baseline kind",
        )
        for i, kind in enumerate(self.kinds):
            check(
                kind in BASELINE_KINDS,
                f"kinds[{i}]",
                f"unknown kind '{kind}'; valid: {BASELINE_KINDS}",
            )
        check(isinstance(self.out_dir, str) and self.out_dir, "out_dir", "required")
        return self

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(key, "unknown configuration field")
        # JSON has one number type: coerce the float-typed fields so values
        # written as 0 or 1 land as floats, while genuinely integer fields
        # keep their strict int checks in validate().
        cfg = cls(**raw)
        for name in ("lat_min", "lat_max", "lon_min", "lon_max", "train_fraction",
                     "lam", "tau_init", "base_lr", "momentum", "beta1", "beta2",
                     "weight_decay", "warmup"):
            setattr(cfg, name, float(getattr(cfg, name)))
        cfg.scales = [float(s) for s in cfg.scales]
        return cfg.validate()

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<document>", f"not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("<document>", "top level must be a JSON object")
        return cls.from_dict(raw)

    # -- derived --------------------------------------------------------------

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        """Hash of the experiment identity.

        ``out_dir`` and ``kinds`` are excluded: where artifacts land and
        which subset of baselines a command touches do not change what any
        individual run computes.
        """
        identity = {
            k: v for k, v in self.to_dict().items() if k not in ("out_dir", "kinds")
        }
        canonical = json.dumps(identity, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def dataset_kwargs(self) -> dict:
        return {
            "seed": self.seed,
            "grid_n": self.grid_n,
            "lat_range": (self.lat_min, self.lat_max),
            "lon_range": (self.lon_min, self.lon_max),
            "train_fraction": self.train_fraction,
        }

    def arch_kwargs(self, kind: str) -> dict:
        base = {
            "loc_hidden": tuple(self.loc_hidden),
            "scales": tuple(self.scales),
            "tau_init": self.tau_init,
        }
        if kind.startswith("smf_"):
            base.update(
                d=self.d,
                heads=self.heads,
                contrastive_width=self.contrastive_width,
            )
        else:
            base.update(width=self.d)
        return base

    def train_config(self, kind: str) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            optimizer=self.optimizer,
            base_lr=self.base_lr,
            momentum=self.momentum,
            betas=(self.beta1, self.beta2),
            weight_decay=self.weight_decay,
            warmup=self.warmup,
            val_every=self.val_every,
            early_stop_patience=self.early_stop_patience,
            run_id=kind,
        )

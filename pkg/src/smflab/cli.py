"""Command-line entry point: generate / pretrain / probe / export-embeddings.

Every command is a pure function of its config file (plus --seed/--out
overrides), so reruns produce byte-identical outputs.  Exit codes: 0 on
success, 2 for configuration problems (including checkpoint fingerprint
mismatches), 3 for I/O failures, 4 when --gate finds a violated ordering.

``SMF_LAB_THREADS`` caps how many baseline pretraining runs execute in
parallel worker processes; results do not depend on the setting.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import CheckpointError, ConfigError, ContractError
from .pid import (
    BASELINE_KINDS,
    STREAM_FOLDS,
    BaselineRun,
    PidReport,
    SyntheticDataset,
    SyntheticTrainingData,
    build_baseline,
    generate_synthetic_dataset,
    run_pid_probes,
    stream_rng,
    stream_seed,
    train_baseline,
)
from .training import (
    AvailabilityProfile,
    format_float,
    load_checkpoint,
    train_smf,
    write_metrics_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_GATE = 4

STREAM_AVAILABILITY = 5  # sub-stream tag for partial/bimodal assignment

NUM_MODALITIES = 3


def _dataset_path(out: Path) -> Path:
    return out / "dataset.csv"


def _checkpoint_path(out: Path, kind: str) -> Path:
    return out / f"{kind}.ckpt"


def _run_fingerprint(config: ExperimentConfig, kind: str) -> str:
    return f"{config.fingerprint()}/{kind}"


def _load_config(args) -> ExperimentConfig:
    if args.config is not None:
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig().validate()
    if args.seed is not None:
        config.seed = args.seed
        config.validate()
    if args.out is not None:
        config.out_dir = args.out
    return config


def _availability_profiles(config: ExperimentConfig, dataset: SyntheticDataset):
    n_train = len(dataset.indices("train"))
    if config.availability == "all":
        return None, None  # SyntheticTrainingData defaults to all-modalities
    rng = stream_rng(config.seed, STREAM_AVAILABILITY)
    if config.availability == "bimodal":
        train = AvailabilityProfile.bimodal(n_train, NUM_MODALITIES, rng)
    else:
        train = AvailabilityProfile.partial(n_train, NUM_MODALITIES, rng)
    return train, None


def _load_dataset(config: ExperimentConfig, out: Path) -> SyntheticDataset:
    path = _dataset_path(out)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}; run 'generate' first")
    return SyntheticDataset.from_csv(path, seed=config.seed)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(config: ExperimentConfig) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate_synthetic_dataset(**config.dataset_kwargs())
    path = _dataset_path(out)
    dataset.to_csv(path)
    manifest = {
        "fingerprint": config.fingerprint(),
        "rows": len(dataset),
        "seed": config.seed,
    }
    with open(out / "dataset.manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    print(f"wrote {path} ({len(dataset)} rows)")
    return EXIT_OK


def _pretrain_one(config_dict: dict, kind: str) -> str:
    """Worker body: train one baseline kind and write its artifacts."""
    config = ExperimentConfig.from_dict(config_dict)
    out = Path(config.out_dir)
    dataset = _load_dataset(config, out)
    train_profile, val_profile = _availability_profiles(config, dataset)
    data = SyntheticTrainingData(dataset, train_profile, val_profile)
    model = build_baseline(kind, config.seed, lam=config.lam, **config.arch_kwargs(kind))
    loop_rng = stream_rng(config.seed, 2, BASELINE_KINDS.index(kind))
    metrics_path = out / f"{kind}_metrics.csv"
    metrics_path.unlink(missing_ok=True)  # reruns must not append to old rows
    model.ensure_features(dataset)
    try:
        train_smf(
            model,
            data,
            config.train_config(kind),
            loop_rng,
            checkpoint_path=_checkpoint_path(out, kind),
            config_fingerprint=_run_fingerprint(config, kind),
            metrics_path=metrics_path,
        )
    finally:
        model.release_features()
    if not metrics_path.exists():  # zero-epoch runs still get a header
        write_metrics_csv(metrics_path, [])
    return kind


def cmd_pretrain(config: ExperimentConfig) -> int:
    out = Path(config.out_dir)
    _load_dataset(config, out)  # fail fast if missing
    workers = int(os.environ.get("SMF_LAB_THREADS", "1") or "1")
    workers = max(1, min(workers, len(config.kinds)))
    if workers == 1:
        for kind in config.kinds:
            _pretrain_one(config.to_dict(), kind)
            print(f"pretrained {kind}")
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_pretrain_one, config.to_dict(), kind)
                for kind in config.kinds
            ]
            for future in futures:
                print(f"pretrained {future.result()}")
    return EXIT_OK


def _restore_run(config: ExperimentConfig, out: Path, kind: str) -> BaselineRun:
    path = _checkpoint_path(out, kind)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}; run 'pretrain' first")
    ckpt = load_checkpoint(path)
    expected = _run_fingerprint(config, kind)
    if ckpt.fingerprint != expected:
        raise ConfigError(
            "seed",
            f"checkpoint {path} was trained under fingerprint "
            f"{ckpt.fingerprint!r}, but this config expects {expected!r}; "
            "refusing to probe mismatched artifacts",
        )
    model = build_baseline(kind, config.seed, lam=config.lam, **config.arch_kwargs(kind))
    ckpt.restore(model.parameters())
    return BaselineRun(kind=kind, seed=config.seed, model=model, history=[], epochs=ckpt.epoch)


GATE_DEFINITIONS = (
    ("smf_full redundancy >= 0.8", ("smf_full",),
     lambda s: s["smf_full"]["redundancy"] >= 0.8),
    ("smf_full uniqueness exceeds pairwise by >= 0.3",
     ("smf_full", "pairwise_contrastive"),
     lambda s: s["smf_full"]["uniqueness"] - s["pairwise_contrastive"]["uniqueness"] >= 0.3),
    ("smf_full synergy exceeds pairwise by >= 0.3",
     ("smf_full", "pairwise_contrastive"),
     lambda s: s["smf_full"]["synergy"] - s["pairwise_contrastive"]["synergy"] >= 0.3),
    ("unimodal synergy <= 0.3", ("unimodal_contrastive",),
     lambda s: s["unimodal_contrastive"]["synergy"] <= 0.3),
    ("smf_full synergy >= 0.6", ("smf_full",),
     lambda s: s["smf_full"]["synergy"] >= 0.6),
    ("smf_full unique weight share exceeds pairwise",
     ("smf_full", "pairwise_contrastive"),
     lambda s: s["smf_full"]["unique_weight_share"]
     > s["pairwise_contrastive"]["unique_weight_share"]),
    ("contrastive-only matches or beats reconstruction-only on redundancy",
     ("smf_contrastive_only", "smf_reconstruction_only"),
     lambda s: s["smf_contrastive_only"]["redundancy"]
     >= s["smf_reconstruction_only"]["redundancy"]),
    ("reconstruction-only beats contrastive-only on uniqueness",
     ("smf_contrastive_only", "smf_reconstruction_only"),
     lambda s: s["smf_reconstruction_only"]["uniqueness"]
     > s["smf_contrastive_only"]["uniqueness"]),
)


def evaluate_gates(report: PidReport) -> list:
    """(description, passed) for every gate whose kinds are in the report."""
    results = []
    for description, needed, check in GATE_DEFINITIONS:
        if all(kind in report.scores for kind in needed):
            results.append((description, bool(check(report.scores))))
    return results


def cmd_probe(config: ExperimentConfig, gate: bool) -> int:
    out = Path(config.out_dir)
    dataset = _load_dataset(config, out)
    runs = [_restore_run(config, out, kind) for kind in config.kinds]
    report = run_pid_probes(
        runs, dataset, fold_seed=stream_seed(config.seed, STREAM_FOLDS)
    )
    path = out / "pid_report.csv"
    report.to_csv(path)
    print(f"wrote {path}")
    if gate:
        results = evaluate_gates(report)
        if not results:
            raise ConfigError("kinds", "--gate needs the kinds the orderings compare")
        failed = False
        for description, passed in results:
            print(f"[{'PASS' if passed else 'FAIL'}] {description}")
            failed = failed or not passed
        if failed:
            return EXIT_GATE
    return EXIT_OK


def cmd_export_embeddings(
    config: ExperimentConfig, checkpoint: str, pca3: bool
) -> int:
    out = Path(config.out_dir)
    dataset = _load_dataset(config, out)
    ckpt = load_checkpoint(checkpoint)
    sha, _, kind = ckpt.fingerprint.rpartition("/")
    if sha != config.fingerprint() or kind not in BASELINE_KINDS:
        raise ConfigError(
            "seed",
            f"checkpoint {checkpoint} fingerprint {ckpt.fingerprint!r} does not "
            f"match this config ({config.fingerprint()!r})",
        )
    model = build_baseline(kind, config.seed, lam=config.lam, **config.arch_kwargs(kind))
    ckpt.restore(model.parameters())

    chunks = []
    all_idx = np.arange(len(dataset))
    for start in range(0, len(dataset), 4096):
        chunks.append(model.embedding(dataset, all_idx[start : start + 4096]))
    emb = np.concatenate(chunks, axis=0)

    columns = ["lat", "lon"] + [f"e_{i + 1}" for i in range(emb.shape[1])]
    blocks = [dataset.lat[:, None], dataset.lon[:, None], emb]
    if pca3:
        centered = emb - emb.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        pcs = centered @ vt[:3].T
        columns += ["pc1", "pc2", "pc3"]
        blocks.append(pcs)
    table = np.concatenate(blocks, axis=1)

    path = out / f"embeddings_{kind}.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in table:
            fh.write(",".join(format_float(v) for v in row) + "\n")
    print(f"wrote {path} ({table.shape[0]} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smf-lab",
        description="synthetic multimodal-fusion laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="JSON config path")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")

    p = sub.add_parser("generate", help="write the synthetic dataset CSV")
    common(p)

    p = sub.add_parser("pretrain", help="train every configured baseline kind")
    common(p)

    p = sub.add_parser("probe", help="run the information probes on checkpoints")
    common(p)
    p.add_argument(
        "--gate",
        action="store_true",
        help="exit nonzero unless the expected orderings hold",
    )

    p = sub.add_parser("export-embeddings", help="dump per-location embeddings")
    common(p)
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument(
        "--pca3",
        action="store_true",
        help="append the top-3 principal component projections",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "generate":
            return cmd_generate(config)
        if args.command == "pretrain":
            return cmd_pretrain(config)
        if args.command == "probe":
            return cmd_probe(config, gate=args.gate)
        if args.command == "export-embeddings":
            return cmd_export_embeddings(config, args.checkpoint, pca3=args.pca3)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, CheckpointError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""Schedules, optimizers, the training loop, checkpoints, availability."""

import numpy as np
import pytest

from smflab.errors import (
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ContractError,
)
from smflab.objective import enumerate_masks, info_nce_symmetric, latent_reconstruction_loss, total_loss
from smflab.pid import (
    SmfSyntheticModel,
    SyntheticTrainingData,
    generate_synthetic_dataset,
    stream_rng,
    synthetic_train_config,
)
from smflab.tensor import Tensor
from smflab.training import (
    AvailabilityProfile,
    OptimizerState,
    ScheduleConfig,
    cosine_lr,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
    train_smf,
    validation_loss,
)


def tiny_setup(seed=5, lam=0.0625, epochs=2, batch_size=32):
    dataset = generate_synthetic_dataset(seed=seed, grid_n=10)
    model = SmfSyntheticModel(seed=seed, lam=lam, loc_hidden=(16,), scales=(1.0, 256.0))
    data = SyntheticTrainingData(dataset)
    config = synthetic_train_config("smf_full", epochs=epochs, batch_size=batch_size)
    rng = stream_rng(seed, 2, 0)
    model.ensure_features(dataset)
    return dataset, model, data, config, rng


class TestCosineLr:
    def test_warmup_boundary_exact(self):
        sched = ScheduleConfig(base_lr=0.3, total_steps=100, warmup=10)
        assert cosine_lr(10, sched) == 0.3

    def test_end_is_zero(self):
        sched = ScheduleConfig(base_lr=0.3, total_steps=100, warmup=10)
        assert cosine_lr(100, sched) == 0.0

    def test_midpoint_half(self):
        sched = ScheduleConfig(base_lr=0.3, total_steps=100, warmup=10)
        mid = 10 + (100 - 10) // 2
        assert cosine_lr(mid, sched) == pytest.approx(0.15, abs=1e-12)

    def test_past_end_clamps(self):
        sched = ScheduleConfig(base_lr=0.3, total_steps=100, warmup=10)
        assert cosine_lr(250, sched) == 0.0

    def test_fractional_warmup(self):
        sched = ScheduleConfig(base_lr=1.0, total_steps=200, warmup=0.05)
        assert sched.warmup_steps() == 10
        assert cosine_lr(5, sched) == pytest.approx(0.5)

    def test_no_warmup_starts_at_base(self):
        sched = ScheduleConfig(base_lr=0.2, total_steps=50, warmup=0.0)
        assert cosine_lr(0, sched) == 0.2


class TestOptimizer:
    def _params(self, values):
        return {"p": Tensor(np.asarray(values, dtype=np.float64), grad_enabled=True)}

    def test_zero_gradients_leave_params_unchanged(self):
        params = self._params([1.0, -2.0, 0.0])
        before = params["p"].data.copy()
        state = OptimizerState.sgd_momentum(params)
        optimizer_step(params, {"p": np.zeros(3)}, state, lr=0.5)
        assert np.array_equal(params["p"].data, before)
        params = self._params([1.0, -2.0, 0.0])
        state = OptimizerState.adamw(params, weight_decay=0.0)
        optimizer_step(params, {"p": np.zeros(3)}, state, lr=0.5)
        assert np.array_equal(params["p"].data, np.asarray([1.0, -2.0, 0.0]))

    def test_plain_descent(self):
        params = self._params([0.0])
        state = OptimizerState.sgd_momentum(params, momentum=0.0)
        optimizer_step(params, {"p": np.array([1.0])}, state, lr=0.1)
        assert params["p"].data[0] == pytest.approx(-0.1, abs=0.0)

    def test_momentum_two_steps_hand_unrolled(self):
        # v1 = 1, p1 = -0.1; v2 = 0.9 + 1 = 1.9, p2 = -0.1 - 0.19 = -0.29
        params = self._params([0.0])
        state = OptimizerState.sgd_momentum(params, momentum=0.9)
        g = {"p": np.array([1.0])}
        optimizer_step(params, g, state, lr=0.1)
        optimizer_step(params, g, state, lr=0.1)
        assert params["p"].data[0] == pytest.approx(-0.29, abs=1e-15)

    def test_shape_mismatch_rejected(self):
        params = self._params([0.0, 1.0])
        state = OptimizerState.sgd_momentum(params)
        with pytest.raises(ContractError):
            optimizer_step(params, {"p": np.zeros(3)}, state, lr=0.1)

    def test_adamw_first_step_magnitude(self):
        # Bias correction makes the first step lr * g / (|g| + eps).
        params = self._params([0.0])
        state = OptimizerState.adamw(params, weight_decay=0.0)
        optimizer_step(params, {"p": np.array([2.0])}, state, lr=0.01)
        assert params["p"].data[0] == pytest.approx(-0.01, rel=1e-6)

    def test_adamw_decoupled_decay_acts_without_gradient(self):
        params = self._params([1.0])
        state = OptimizerState.adamw(params, weight_decay=0.1)
        optimizer_step(params, {"p": np.zeros(1)}, state, lr=0.5)
        assert params["p"].data[0] == pytest.approx(1.0 - 0.5 * 0.1 * 1.0)


class TestAvailability:
    def test_all_modalities(self):
        profile = AvailabilityProfile.all_modalities(10, 3)
        assert all(s == frozenset({0, 1, 2}) for s in profile.sets)

    def test_bimodal_sets_have_exactly_two(self):
        rng = np.random.default_rng(0)
        profile = AvailabilityProfile.bimodal(101, 5, rng)
        assert all(len(s) == 2 and 0 in s for s in profile.sets)
        # equal shares within one sample of rounding
        counts = {}
        for s in profile.sets:
            other = next(iter(s - {0}))
            counts[other] = counts.get(other, 0) + 1
        assert max(counts.values()) - min(counts.values()) <= 1

    def test_partial_tier_proportions(self):
        rng = np.random.default_rng(1)
        profile = AvailabilityProfile.partial(1003, 5, rng)
        tier_counts = {}
        for s in profile.sets:
            extra = len(s) - 1
            tier_counts[extra] = tier_counts.get(extra, 0) + 1
        assert set(tier_counts) == {1, 2, 3, 4}
        assert max(tier_counts.values()) - min(tier_counts.values()) <= 1

    def test_coords_always_present(self):
        with pytest.raises(ContractError):
            AvailabilityProfile(sets=(frozenset({1, 2}),))

    def test_groups_partition(self):
        rng = np.random.default_rng(2)
        profile = AvailabilityProfile.partial(40, 4, rng)
        groups = profile.groups()
        seen = np.zeros(40, dtype=int)
        for indices in groups.values():
            seen[indices] += 1
        assert np.all(seen == 1)


class TestTrainLoop:
    def test_zero_lr_leaves_params_bitwise_unchanged(self):
        _, model, data, config, rng = tiny_setup(epochs=1)
        config.base_lr = 0.0
        before = {k: p.data.copy() for k, p in model.parameters().items()}
        train_smf(model, data, config, rng)
        for name, p in model.parameters().items():
            assert np.array_equal(p.data, before[name]), name

    def test_fixed_seed_reproduces_history_bitwise(self):
        def run():
            _, model, data, config, rng = tiny_setup(epochs=2)
            history = train_smf(model, data, config, rng)
            final = {k: p.data.copy() for k, p in model.parameters().items()}
            return history, final

        h1, f1 = run()
        h2, f2 = run()
        assert [r.train_total for r in h1] == [r.train_total for r in h2]
        assert [r.val_total for r in h1] == [r.val_total for r in h2]
        for name in f1:
            assert np.array_equal(f1[name], f2[name])

    def test_empty_split_rejected(self):
        _, model, _, config, rng = tiny_setup()
        with pytest.raises(ContractError):
            train_smf(model, _EmptyData(), config, rng)

    def test_short_final_batch_kept(self):
        _, model, data, config, rng = tiny_setup(epochs=1, batch_size=50)
        # 60 train rows with batch 50 -> one full + one short batch
        from smflab.training import steps_per_epoch

        assert steps_per_epoch(data.train_groups(), 50) == 2

    def test_early_stopping_restores_best(self):
        _, model, data, config, rng = tiny_setup(epochs=4)
        config.early_stop_patience = 0
        config.base_lr = 0.05  # large enough that validation can worsen
        history = train_smf(model, data, config, rng)
        vals = [r.val_total for r in history]
        final_val = validation_loss(model, data, config.batch_size)
        assert final_val <= min(vals) + 1e-12


class _EmptyData:
    def train_groups(self):
        return {}

    def val_groups(self):
        return {}


class TestMetricsCsv:
    def test_schema_and_empty_validation_cell(self, tmp_path):
        from smflab.training import METRICS_COLUMNS, MetricsRow, write_metrics_csv

        rows = [
            MetricsRow("run", 1, 1.5, 0.25, 1.421875, 2.0, 3e-4, 0.07),
            MetricsRow("run", 2, 1.25, 0.2, 1.184375, None, 2.9e-4, 0.0701),
        ]
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, rows)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(METRICS_COLUMNS)
        assert lines[1].split(",")[4] == "2.0"
        assert lines[2].split(",")[4] == ""  # skipped validation epoch
        # lossless float round-trip
        assert float(lines[1].split(",")[3]) == 1.421875


class TestValidationLoss:
    def test_matches_explicit_scheme_enumeration(self):
        dataset, model, data, config, rng = tiny_setup(epochs=1)
        train_smf(model, data, config, rng)
        got = validation_loss(model, data, batch_size=7)

        # Brute-force oracle: fresh fused views per scheme, no caching.
        from smflab.training import _epoch_batches

        batch_values = []
        for availability, idx in _epoch_batches(data.val_groups(), 7, rng=None):
            batch = data.make_batch(availability, idx, train=False)
            tokens = model._tokens(batch)
            targets = model._targets(batch)
            tau = model.fusion.tau()
            totals = []
            for scheme in enumerate_masks(availability):
                z_m = model.fusion.fuse(tokens, scheme.inverted())
                z_mbar = model.fusion.fuse(tokens, scheme)
                contr = info_nce_symmetric(
                    model.fusion.contrastive_head(z_m),
                    model.fusion.contrastive_head(z_mbar),
                    tau,
                )
                recon = latent_reconstruction_loss(
                    model._restrict_recon(
                        model.fusion.reconstruction_head(z_m), batch.availability
                    ),
                    model._restrict_recon(
                        model.fusion.reconstruction_head(z_mbar), batch.availability
                    ),
                    targets,
                    num_available=len(batch.availability),
                )
                totals.append(
                    total_loss(contr.item(), recon.item(), tau.item(), model.lam).total
                )
            batch_values.append(np.mean(totals))
        expected = float(np.mean(batch_values))
        assert got == pytest.approx(expected, abs=1e-12)

    def test_deterministic_bitwise(self):
        _, model, data, config, rng = tiny_setup(epochs=1)
        train_smf(model, data, config, rng)
        a = validation_loss(model, data, batch_size=8)
        b = validation_loss(model, data, batch_size=8)
        assert a == b

    def test_two_modalities_mean_over_two_schemes(self):
        # K=2: exactly two ordered bipartitions.
        assert len(enumerate_masks({0, 1})) == 2


class TestCheckpoint:
    def _fit_briefly(self, tmp_path, epochs=2):
        _, model, data, config, rng = tiny_setup(epochs=epochs)
        params = model.parameters()
        opt = config.make_optimizer(params)
        train_smf(model, data, config, rng)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, opt, rng, epoch=epochs, fingerprint="abc")
        return model, params, opt, rng, path

    def test_save_load_save_bitwise(self, tmp_path):
        model, params, opt, rng, path = self._fit_briefly(tmp_path)
        blob1 = path.read_bytes()
        ckpt = load_checkpoint(path)
        fresh_model = SmfSyntheticModel(
            seed=99, lam=0.0625, loc_hidden=(16,), scales=(1.0, 256.0)
        )
        fresh_params = fresh_model.parameters()
        fresh_opt = OptimizerState.sgd_momentum(fresh_params)
        fresh_rng = np.random.default_rng(123)
        ckpt.restore(fresh_params, fresh_opt, fresh_rng)
        path2 = tmp_path / "again.ckpt"
        save_checkpoint(path2, fresh_params, fresh_opt, fresh_rng, epoch=ckpt.epoch, fingerprint=ckpt.fingerprint)
        blob2 = path2.read_bytes()
        assert blob1 == blob2

    def test_roundtrip_restores_params_and_rng(self, tmp_path):
        model, params, opt, rng, path = self._fit_briefly(tmp_path)
        expected_next = rng.integers(0, 1 << 30)
        ckpt = load_checkpoint(path)
        model2 = SmfSyntheticModel(seed=7, lam=0.0625, loc_hidden=(16,), scales=(1.0, 256.0))
        params2 = model2.parameters()
        opt2 = OptimizerState.sgd_momentum(params2)
        rng2 = np.random.default_rng(0)
        ckpt.restore(params2, opt2, rng2)
        for name, p in params.items():
            assert np.array_equal(p.data, params2[name].data)
        assert rng2.integers(0, 1 << 30) == expected_next

    def test_truncated_file_raises_without_partial_model(self, tmp_path):
        _, params, opt, rng, path = self._fit_briefly(tmp_path)
        blob = path.read_bytes()
        clipped = tmp_path / "clipped.ckpt"
        clipped.write_bytes(blob[: len(blob) - 100])
        with pytest.raises(CheckpointTruncatedError):
            load_checkpoint(clipped)

    def test_bad_magic_and_version(self, tmp_path):
        _, params, opt, rng, path = self._fit_briefly(tmp_path)
        blob = bytearray(path.read_bytes())
        wrong_magic = tmp_path / "magic.ckpt"
        wrong_magic.write_bytes(b"NOTACKPT" + bytes(blob[8:]))
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(wrong_magic)
        blob[8:12] = (99).to_bytes(4, "little")
        wrong_version = tmp_path / "version.ckpt"
        wrong_version.write_bytes(bytes(blob))
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(wrong_version)

    def test_shape_mismatch_raises(self, tmp_path):
        _, params, opt, rng, path = self._fit_briefly(tmp_path)
        ckpt = load_checkpoint(path)
        other = SmfSyntheticModel(seed=1, lam=0.5, d=6, heads=1, contrastive_width=6,
                                  loc_hidden=(8,), scales=(1.0,))
        with pytest.raises(CheckpointShapeError):
            ckpt.restore(other.parameters())

    def test_interrupted_vs_uninterrupted_run(self, tmp_path):
        total_epochs = 4
        # Uninterrupted reference.
        _, model_a, data_a, config_a, rng_a = tiny_setup(epochs=total_epochs)
        hist_a = train_smf(model_a, data_a, config_a, rng_a)

        # Interrupted: same 4-epoch plan stopped after 2 epochs, checkpointed
        # at the boundary, then resumed into completely fresh objects.
        path = tmp_path / "mid.ckpt"
        _, model_c, data_c, config_c, rng_c = tiny_setup(epochs=total_epochs)
        train_smf(
            model_c, data_c, config_c, rng_c,
            checkpoint_path=path, config_fingerprint="fp", stop_after_epoch=2,
        )

        _, model_d, data_d, config_d, rng_d = tiny_setup(epochs=total_epochs)
        hist_d = train_smf(
            model_d, data_d, config_d, rng_d, resume_from=path,
            config_fingerprint="fp",
        )
        assert hist_d[-1].epoch == total_epochs
        assert hist_a[-1].train_total == hist_d[-1].train_total
        assert hist_a[-1].val_total == hist_d[-1].val_total
        for name, p in model_a.parameters().items():
            assert np.array_equal(p.data, model_d.parameters()[name].data), name

"""Losses and mask sampling: golden values, symmetry, distribution checks."""

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import fd_gradcheck
from smflab.errors import ContractError, DimensionError
from smflab import tensor as T
from smflab.objective import (
    LossBreakdown,
    combine_losses,
    enumerate_masks,
    info_nce_symmetric,
    latent_reconstruction_loss,
    sample_mask,
    total_loss,
    znormalize_latents,
)
from smflab.tensor import Tensor


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


class TestSampleMask:
    def test_two_modalities_enumeration(self):
        rng = np.random.default_rng(0)
        counts = {}
        n = 10_000
        for _ in range(n):
            s = sample_mask({0, 1}, rng)
            key = tuple(sorted(s.masked))
            counts[key] = counts.get(key, 0) + 1
        assert set(counts) == {(0,), (1,)}
        _, p = chisquare(list(counts.values()))
        assert p > 0.01

    def test_three_modalities_uniform_within_3_sigma(self):
        rng = np.random.default_rng(1)
        n = 60_000
        counts = {}
        for _ in range(n):
            s = sample_mask({0, 1, 2}, rng)
            key = tuple(sorted(s.masked))
            counts[key] = counts.get(key, 0) + 1
        # Exhaustive enumeration oracle: 2^3 - 2 = 6 ordered bipartitions.
        expected_keys = {tuple(sorted(s.masked)) for s in enumerate_masks({0, 1, 2})}
        assert set(counts) == expected_keys and len(expected_keys) == 6
        expected = n / 6
        sigma = np.sqrt(n * (1 / 6) * (5 / 6))
        for key in expected_keys:
            assert abs(counts[key] - expected) < 3 * sigma

    def test_single_modality_rejected(self):
        with pytest.raises(ContractError):
            sample_mask({0}, np.random.default_rng(0))

    def test_parts_cover_available(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            s = sample_mask({0, 1, 2, 3}, rng)
            assert s.masked | s.kept == frozenset({0, 1, 2, 3})
            assert not (s.masked & s.kept)


class TestInfoNce:
    def test_singleton_is_zero(self):
        a = Tensor([[1.0, 2.0]])
        b = Tensor([[3.0, -1.0]])
        assert info_nce_symmetric(a, b, 0.7).item() == 0.0

    def test_orthonormal_pair_golden(self):
        loss = info_nce_symmetric(Tensor(np.eye(2)), Tensor(np.eye(2)), 1.0)
        assert loss.item() == pytest.approx(0.6265233750364456, abs=1e-12)
        assert loss.item() == pytest.approx(0.62652, abs=1e-5)

    def test_chance_level_random_embeddings(self):
        # Monte-Carlo oracle, 20 repeats: each direction of the loss sits at
        # the log(N) chance level, i.e. the two-term total at 2*log(N).
        rng = np.random.default_rng(3)
        n = 256
        log_n = np.log(n)
        values = []
        for _ in range(20):
            a = Tensor(unit_rows(rng, n, 64))
            b = Tensor(unit_rows(rng, n, 64))
            loss = info_nce_symmetric(a, b, 1.0).item()
            values.append(loss)
            assert abs(loss / 2.0 - log_n) < 0.15 * log_n
        assert abs(np.mean(values) / 2.0 - log_n) < 0.15 * log_n

    def test_swap_symmetry_exact(self):
        rng = np.random.default_rng(4)
        a = Tensor(rng.standard_normal((17, 9)))
        b = Tensor(rng.standard_normal((17, 9)))
        assert (
            info_nce_symmetric(a, b, 0.23).item()
            == info_nce_symmetric(b, a, 0.23).item()
        )

    def test_rescaling_single_embedding_invariant(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((8, 5))
        b = rng.standard_normal((8, 5))
        base = info_nce_symmetric(Tensor(a), Tensor(b), 0.5).item()
        a2 = a.copy()
        a2[3] *= 37.5
        scaled = info_nce_symmetric(Tensor(a2), Tensor(b), 0.5).item()
        assert abs(base - scaled) < 1e-12

    def test_matched_dominant_diagonal_below_chance(self):
        rng = np.random.default_rng(6)
        n = 32
        base = unit_rows(rng, n, 16)
        noise = 0.05 * rng.standard_normal((n, 16))
        a = Tensor(base)
        b = Tensor(base + noise)
        loss = info_nce_symmetric(a, b, 0.07).item()
        log_n = np.log(n)
        assert loss / 2.0 < log_n
        assert loss < 2.0 * log_n

    def test_zero_norm_embedding_rejected(self):
        a = Tensor([[0.0, 0.0], [1.0, 0.0]])
        b = Tensor(np.eye(2))
        with pytest.raises(ContractError):
            info_nce_symmetric(a, b, 1.0)

    def test_batch_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            info_nce_symmetric(Tensor(np.eye(2)), Tensor(np.eye(3)), 1.0)

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(ContractError):
            info_nce_symmetric(Tensor(np.eye(2)), Tensor(np.eye(2)), 0.0)

    @pytest.mark.parametrize("seed", range(3))
    def test_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        a = Tensor(rng.uniform(-2, 2, (4, 3)), grad_enabled=True)
        b = Tensor(rng.uniform(-2, 2, (4, 3)), grad_enabled=True)
        log_tau = Tensor(np.asarray(np.log(0.3)), grad_enabled=True)

        def loss():
            return info_nce_symmetric(a, b, T.exp(log_tau))

        fd_gradcheck(loss, [a, b, log_tau])


class TestZNormalize:
    def test_constant_dimension_zeroed(self):
        stats, normalized = znormalize_latents({"m": np.full((5, 2), 3.0)})
        np.testing.assert_array_equal(normalized["m"], np.zeros((5, 2)))

    def test_standardized_dimension_unchanged(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(1000)
        x = (x - x.mean()) / x.std()
        stats, normalized = znormalize_latents({"m": x[:, None]})
        np.testing.assert_allclose(normalized["m"][:, 0], x, atol=1e-12)

    def test_population_sigma(self):
        stats, normalized = znormalize_latents({"m": np.array([[0.0], [2.0]])})
        np.testing.assert_allclose(normalized["m"][:, 0], [-1.0, 1.0], atol=1e-15)

    def test_train_stats_reused_for_eval(self):
        train = {"m": np.array([[0.0], [2.0], [4.0]])}
        stats, _ = znormalize_latents(train)
        out = stats.transform({"m": np.array([[2.0]])})
        assert out["m"][0, 0] == pytest.approx(0.0)

    def test_fitted_split_is_standardized(self):
        rng = np.random.default_rng(1)
        stats, normalized = znormalize_latents({"m": rng.uniform(0, 9, (400, 3))})
        assert np.max(np.abs(normalized["m"].mean(axis=0))) < 1e-6
        assert np.max(np.abs(normalized["m"].var(axis=0) - 1.0)) < 1e-4

    def test_needs_two_rows(self):
        with pytest.raises(ContractError):
            znormalize_latents({"m": np.ones((1, 3))})


class TestReconLoss:
    def test_perfect_reconstruction(self):
        t = [np.ones((4, 3)), np.zeros((4, 3))]
        recon = Tensor(np.concatenate(t, axis=-1))
        loss = latent_reconstruction_loss(recon, recon, t)
        assert loss.item() == 0.0

    def test_plus_one_everywhere(self):
        targets = [np.zeros((6, 3)), np.zeros((6, 3))]
        recon = Tensor(np.ones((6, 6)))
        loss = latent_reconstruction_loss(recon, recon, targets)
        assert loss.item() == pytest.approx(3.0, abs=1e-15)

    def test_quadratic_homogeneity(self):
        rng = np.random.default_rng(2)
        targets = [rng.uniform(-1, 1, (5, 2)), rng.uniform(-1, 1, (5, 4))]
        resid = [rng.uniform(-1, 1, (5, 2)), rng.uniform(-1, 1, (5, 4))]
        one = latent_reconstruction_loss(
            Tensor(np.concatenate([t + r for t, r in zip(targets, resid)], axis=-1)),
            Tensor(np.concatenate(targets, axis=-1)),
            targets,
        ).item()
        two = latent_reconstruction_loss(
            Tensor(np.concatenate([t + 2 * r for t, r in zip(targets, resid)], axis=-1)),
            Tensor(np.concatenate(targets, axis=-1)),
            targets,
        ).item()
        assert two == pytest.approx(4.0 * one, rel=1e-14)

    def test_nonnegative_and_zero_iff_exact(self):
        rng = np.random.default_rng(3)
        targets = [rng.uniform(-1, 1, (7, 3))]
        exact = Tensor(targets[0])
        off = Tensor(targets[0] + 1e-9)
        assert latent_reconstruction_loss(exact, exact, targets).item() == 0.0
        assert latent_reconstruction_loss(off, exact, targets).item() > 0.0

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            latent_reconstruction_loss(
                Tensor(np.zeros((2, 5))),
                Tensor(np.zeros((2, 5))),
                [np.zeros((2, 3)), np.zeros((2, 3))],
            )

    @pytest.mark.parametrize("seed", range(3))
    def test_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        targets = [rng.uniform(-1, 1, (3, 2)), rng.uniform(-1, 1, (3, 3))]
        ra = Tensor(rng.uniform(-1, 1, (3, 5)), grad_enabled=True)
        rb = Tensor(rng.uniform(-1, 1, (3, 5)), grad_enabled=True)

        def loss():
            return latent_reconstruction_loss(ra, rb, targets)

        fd_gradcheck(loss, [ra, rb])


class TestTotalLoss:
    def test_lambda_zero_is_contrastive(self):
        b = total_loss(1.7, 0.9, tau=0.07, lam=0.0)
        assert b.total == 1.7

    def test_lambda_one_is_reconstruction(self):
        b = total_loss(1.7, 0.9, tau=0.07, lam=1.0)
        assert b.total == 0.9

    def test_paper_weight_arithmetic(self):
        b = total_loss(1.0, 0.5, tau=0.07, lam=0.0625)
        assert b.total == pytest.approx(0.96875, abs=0.0)

    def test_out_of_range_lambda(self):
        with pytest.raises(ContractError):
            total_loss(1.0, 1.0, tau=0.07, lam=1.5)
        with pytest.raises(ContractError):
            combine_losses(Tensor(1.0), Tensor(1.0), -0.1)

    def test_breakdown_matches_graph_total(self):
        c, r, lam = 1.234567, 0.891011, 0.0625
        graph = combine_losses(Tensor(c), Tensor(r), lam).item()
        record = total_loss(c, r, tau=0.07, lam=lam)
        assert record.total == graph
        assert record.total == (1.0 - lam) * c + lam * r

    def test_temperature_logit_positive(self):
        for logit in (-30.0, -2.0, 0.0, 3.0):
            tau = T.exp(Tensor(np.asarray(logit))).item()
            assert tau > 0.0

import numpy as np
import pytest
import torch

from s2sdespeckle import (
    N2NConfig,
    NestedUNetConfig,
    apply_speckle,
    compute_pair_bases,
    crop_patches,
    despeckle,
    make_s2s_pair,
    mse_loss,
    psdi_round,
    psnr,
    sample_speckle_field,
    synthesize_corpus,
    train_despeckler,
)
from s2sdespeckle.networks import build_model, to_batch_tensor
from s2sdespeckle.seeds import derive_seed
from s2sdespeckle.speckle import S2SPair

TOY_UNET = NestedUNetConfig(depth=1, base_channels=4)


def constant_pairs(value=0.6, count=32, size=16, looks=1):
    base = np.full((size, size), value, np.float32)
    return [make_s2s_pair(base, looks, 2 * i + 1, 2 * i + 2) for i in range(count)]


class TestConfig:
    def test_defaults(self):
        cfg = N2NConfig()
        assert cfg.epochs == 16
        assert cfg.batch_size == 16
        assert cfg.lr == 1e-4
        assert cfg.betas == (0.9, 0.999)
        assert cfg.eps == 1e-8
        assert cfg.lr_halve_every == 8
        assert tuple(cfg.looks_choices) == (1, 2, 4, 8, 16)
        assert cfg.pair_regen == "online"

    def test_validation(self):
        with pytest.raises(ValueError):
            N2NConfig(epochs=0).validate()
        with pytest.raises(ValueError):
            N2NConfig(pair_regen="never").validate()
        with pytest.raises(ValueError):
            N2NConfig(looks_choices=()).validate()


class TestTrainDespeckler:
    def test_conditional_mean_recovered_on_constant_corpus(self):
        # the operational heart of the noisy-target argument: the MSE
        # minimizer over unit-mean speckled targets is the clean constant
        cfg = N2NConfig(
            epochs=120, batch_size=8, lr=1e-3, lr_halve_every=40,
            looks_choices=(1, 2, 4, 8, 16), pair_regen="online", unet=TOY_UNET,
        )
        model, log = train_despeckler(constant_pairs(0.6), cfg, seed=3)
        outputs = []
        for i in range(8):
            field = sample_speckle_field(16, 16, 1, seed=derive_seed(99, i))
            noisy = apply_speckle(np.full((16, 16), 0.6, np.float32), field)
            outputs.append(despeckle(model, noisy).mean())
        assert abs(float(np.mean(outputs)) - 0.6) / 0.6 < 0.05
        # loss monotonicity at toy scale
        n2n = log.phase("n2n")
        first_epoch = [r["mse"] for r in n2n if r["epoch"] == 1]
        last_epoch = [r["mse"] for r in n2n if r["epoch"] == cfg.epochs]
        assert np.mean(last_epoch) < np.mean(first_epoch)

    def test_identical_pairs_drive_toward_identity(self, rng):
        bases = [rng.random((16, 16)).astype(np.float32) for _ in range(16)]
        pairs = [S2SPair(first=b, second=b.copy(), base=b, looks=1.0, seeds=(1, 2)) for b in bases]
        cfg = N2NConfig(epochs=20, batch_size=8, lr=1e-3, lr_halve_every=10, pair_regen="fixed", unet=TOY_UNET)
        untrained = build_model("despeckler", TOY_UNET, seed=derive_seed(5, "init", "despeckler"))
        x = to_batch_tensor(np.stack(bases))
        with torch.no_grad():
            before = float(mse_loss(x, untrained.module(x)))
        model, log = train_despeckler(pairs, cfg, seed=5)
        with torch.no_grad():
            after = float(mse_loss(x, model.module(x)))
        assert after < before
        assert log.phase("n2n")[-1]["mse"] < log.phase("n2n")[0]["mse"]

    def test_deterministic(self):
        cfg = N2NConfig(epochs=2, batch_size=8, pair_regen="online", unet=TOY_UNET)
        a, log_a = train_despeckler(constant_pairs(count=8), cfg, seed=7)
        b, log_b = train_despeckler(constant_pairs(count=8), cfg, seed=7)
        for pa, pb in zip(a.module.parameters(), b.module.parameters()):
            assert torch.equal(pa, pb)
        assert [r["mse"] for r in log_a.records] == [r["mse"] for r in log_b.records]

    def test_pair_order_symmetry(self):
        dataset, _ = synthesize_corpus("piecewise-constant", 8, 64, seed=1)
        bases = [p for img in dataset.images for p in crop_patches(img, 32)]
        pairs = [make_s2s_pair(b, 1, 1000 + 2 * i, 1001 + 2 * i) for i, b in enumerate(bases)]
        swapped = [
            S2SPair(first=p.second, second=p.first, base=p.base, looks=p.looks,
                    seeds=(p.seeds[1], p.seeds[0]))
            for p in pairs
        ]
        held, _ = synthesize_corpus("piecewise-constant", 6, 64, seed=2)
        clean = [crop_patches(img, 32)[0] for img in held.images]
        noisy = [
            apply_speckle(c, sample_speckle_field(32, 32, 1, seed=derive_seed(7, i)))
            for i, c in enumerate(clean)
        ]
        cfg = N2NConfig(
            epochs=30, batch_size=8, lr=1e-3, lr_halve_every=10, looks_choices=(1,),
            pair_regen="fixed", unet=NestedUNetConfig(depth=1, base_channels=8),
        )

        def held_out_psnr(train_pairs):
            model, _ = train_despeckler(train_pairs, cfg, seed=11)
            return float(np.mean([psnr(c, despeckle(model, n)).value for c, n in zip(clean, noisy)]))

        assert abs(held_out_psnr(pairs) - held_out_psnr(swapped)) < 0.3

    def test_empty_pairs_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train_despeckler([], N2NConfig(unet=TOY_UNET), seed=0)

    def test_mixed_shapes_rejected(self):
        pairs = constant_pairs(count=2, size=16) + constant_pairs(count=2, size=32)
        with pytest.raises(ValueError, match="shape"):
            train_despeckler(pairs, N2NConfig(unet=TOY_UNET), seed=0)

    def test_incompatible_depth_rejected(self):
        pairs = constant_pairs(count=2, size=18)
        cfg = N2NConfig(unet=NestedUNetConfig(depth=2, base_channels=4))
        with pytest.raises(ValueError, match="incompatible"):
            train_despeckler(pairs, cfg, seed=0)


class TestDespeckle:
    @pytest.mark.parametrize("size", [96, 320, 512])
    def test_shape_preserved_at_test_sizes(self, size, rng):
        model = build_model("despeckler", NestedUNetConfig(depth=2, base_channels=4))
        img = rng.random((size, size)).astype(np.float32)
        out = despeckle(model, img)
        assert out.shape == (size, size)

    def test_odd_sizes_pad_and_crop(self, rng):
        model = build_model("despeckler", NestedUNetConfig(depth=2, base_channels=4))
        img = rng.random((50, 70)).astype(np.float32)
        assert despeckle(model, img).shape == (50, 70)

    def test_zero_input_in_range(self):
        model = build_model("despeckler", TOY_UNET)
        out = despeckle(model, np.zeros((16, 16), np.float32))
        assert np.all(np.isfinite(out))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_output_clamped(self, rng):
        model = build_model("despeckler", TOY_UNET)
        out = despeckle(model, rng.random((32, 32)).astype(np.float32) * 3.0)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_deterministic(self, rng):
        model = build_model("despeckler", TOY_UNET)
        img = rng.random((16, 16)).astype(np.float32)
        assert np.array_equal(despeckle(model, img), despeckle(model, img))

    def test_wrong_role(self):
        g2 = build_model("g2", __import__("s2sdespeckle").DnCNNConfig(depth=3, channels=4))
        with pytest.raises(ValueError, match="despeckler"):
            despeckle(g2, np.zeros((16, 16), np.float32))


class TestPsdiRound:
    def build_round1(self):
        cfg = N2NConfig(epochs=3, batch_size=8, pair_regen="online", unet=TOY_UNET)
        model, _ = train_despeckler(constant_pairs(count=8), cfg, seed=13)
        return model, cfg

    def test_pairs_come_from_despeckler(self, rng):
        model, cfg = self.build_round1()
        images = rng.random((6, 16, 16)).astype(np.float32)
        result = psdi_round(model, images, cfg, seed=21)
        expected_bases = compute_pair_bases(model, images)
        assert len(result.pairs) == 6
        for pair, base in zip(result.pairs, expected_bases):
            assert np.array_equal(pair.base, base)

    def test_deterministic(self, rng):
        model, cfg = self.build_round1()
        images = rng.random((4, 16, 16)).astype(np.float32)
        a = psdi_round(model, images, cfg, seed=31)
        b = psdi_round(model, images, cfg, seed=31)
        for pa, pb in zip(a.despeckler.module.parameters(), b.despeckler.module.parameters()):
            assert torch.equal(pa, pb)

    def test_fine_tune_differs_from_scratch(self, rng):
        model, cfg = self.build_round1()
        images = rng.random((4, 16, 16)).astype(np.float32)
        scratch = psdi_round(model, images, cfg, seed=41, fine_tune=False)
        tuned = psdi_round(model, images, cfg, seed=41, fine_tune=True)
        assert any(
            not torch.equal(pa, pb)
            for pa, pb in zip(scratch.despeckler.module.parameters(), tuned.despeckler.module.parameters())
        )
        # fine-tune must not mutate the round-1 model
        rerun = psdi_round(model, images, cfg, seed=41, fine_tune=False)
        for pa, pb in zip(scratch.despeckler.module.parameters(), rerun.despeckler.module.parameters()):
            assert torch.equal(pa, pb)

    def test_wrong_role(self, rng):
        g1 = build_model("g1", TOY_UNET)
        with pytest.raises(ValueError, match="despeckler"):
            psdi_round(g1, rng.random((2, 16, 16)).astype(np.float32), N2NConfig(unet=TOY_UNET), seed=0)

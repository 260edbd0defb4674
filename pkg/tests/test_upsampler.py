import numpy as np
import pytest

from strandgen import codec as cd
from strandgen import upsampler as up
from strandgen.geometry import LOCAL, LatentMap, Strand
from strandgen.synthetic import synthetic_strands


def small_codec(seed=0):
    return cd.init_codec_params(strand_length=20, latent_dim=6, hidden=32,
                                seed=seed)


class TestSimilarity:
    def test_identical_strands(self):
        s = Strand(synthetic_strands(1, 20, 1)[0], space=LOCAL)
        assert up.strand_cosine_similarity(s, s) == pytest.approx(1.0)

    def test_mirrored_strand(self):
        pts = synthetic_strands(1, 20, 2)[0]
        a = Strand(pts, space=LOCAL)
        b = Strand(-pts, space=LOCAL)
        assert up.strand_cosine_similarity(a, b) == pytest.approx(-1.0)

    def test_orthogonal_lines(self):
        t = np.linspace(0, 1, 20)
        zed = np.zeros_like(t)
        a = Strand(np.stack([zed, zed, t], 1), space=LOCAL)
        b = Strand(np.stack([t, zed, zed], 1), space=LOCAL)
        assert up.strand_cosine_similarity(a, b) == pytest.approx(0.0)

    def test_degenerate_pair_is_one(self):
        a = Strand(np.zeros((20, 3)), space=LOCAL)
        b = Strand(synthetic_strands(1, 20, 3)[0], space=LOCAL)
        assert up.strand_cosine_similarity(a, b) == 1.0

    def test_length_mismatch(self):
        a = Strand(np.zeros((20, 3)), space=LOCAL)
        b = Strand(np.zeros((21, 3)), space=LOCAL)
        with pytest.raises(ValueError):
            up.strand_cosine_similarity(a, b)


class TestBlendWeight:
    def test_anchor_values(self):
        assert up.blend_weight(0.0) == pytest.approx(1.0, abs=1e-12)
        assert up.blend_weight(1.0) == pytest.approx(0.0, abs=1e-12)
        left = 1.0 - 1.63 * 0.9 ** 5
        assert up.blend_weight(0.9) == pytest.approx(left, abs=1e-9)
        assert up.blend_weight(0.9) == pytest.approx(0.03750, abs=2e-6)

    def test_branch_gap_regression(self):
        left = float(up.blend_weight(0.9))
        right_limit = 0.4 - 0.4 * 0.9
        assert abs(right_limit - left) <= 0.0025

    def test_range_and_monotonicity(self):
        xs = np.linspace(-1, 1, 2001)
        f = up.blend_weight(xs)
        assert np.all((f >= 0.0) & (f <= 1.0))
        # right branch is linear decreasing; the jump at exactly 0.9 is the
        # documented branch gap covered by test_branch_gap_regression
        hi = np.linspace(0.9 + 1e-9, 1.0, 200)
        fh = up.blend_weight(hi)
        assert np.all(np.diff(fh) <= 1e-12)

    def test_negative_similarity_clamps_to_one(self):
        assert up.blend_weight(-1.0) == pytest.approx(1.0)  # 2.63 clamped


class TestUpsample:
    def test_constant_map_exact(self):
        codec = small_codec(1)
        const = np.float32(0.37)
        dense = np.full((4, 4, 6), const, dtype=np.float32)
        lm = LatentMap.from_dense(dense, np.ones((4, 4), bool))
        out = up.upsample(lm, (16, 16), codec, noise="off")
        assert out.shape == (16, 16)
        assert np.all(out.latents == const)

    def test_target_shape_512(self):
        codec = small_codec(2)
        rng = np.random.default_rng(3)
        dense = rng.standard_normal((8, 8, 6)).astype(np.float32)
        lm = LatentMap.from_dense(dense, np.ones((8, 8), bool))
        out = up.upsample(lm, 512, codec, noise="off")
        assert out.shape == (512, 512)

    def test_guide_texels_reproduced_exactly(self):
        codec = small_codec(4)
        rng = np.random.default_rng(5)
        dense = rng.standard_normal((6, 6, 6)).astype(np.float32)
        lm = LatentMap.from_dense(dense, np.ones((6, 6), bool))
        k = 4
        out = up.upsample(lm, (6 * k, 6 * k), codec, noise="off").dense()
        for gy in range(6):
            for gx in range(6):
                assert np.array_equal(out[gy * k, gx * k], dense[gy, gx])

    def test_identical_guides_all_bilinear_equals_nn(self):
        codec = small_codec(6)
        z = np.random.default_rng(7).standard_normal(6).astype(np.float32)
        dense = np.tile(z, (5, 5, 1))
        lm = LatentMap.from_dense(dense, np.ones((5, 5), bool))
        out = up.upsample(lm, (15, 15), codec, noise="off")
        assert np.all(out.latents == z[None, :])

    def test_mask_upsampled_by_nearest(self):
        codec = small_codec(8)
        rng = np.random.default_rng(9)
        mask = np.ones((4, 4), bool)
        mask[0, 0] = False
        dense = rng.standard_normal((4, 4, 6)).astype(np.float32)
        dense[0, 0] = 0
        lm = LatentMap.from_dense(dense, mask)
        out = up.upsample(lm, (8, 8), codec, noise="off")
        ny = np.minimum(np.round(np.arange(8) * 4 / 8).astype(int), 3)
        expect = mask[ny][:, ny]
        assert np.array_equal(out.mask, expect)

    def test_empty_map_rejected(self):
        codec = small_codec(10)
        lm = LatentMap(mask=np.zeros((4, 4), bool),
                       latents=np.zeros((0, 6), np.float32))
        with pytest.raises(ValueError):
            up.upsample(lm, (8, 8), codec)


class TestInjectNoise:
    def test_constant_map_unchanged(self):
        dense = np.full((8, 8, 4), 1.25, dtype=np.float32)
        lm = LatentMap.from_dense(dense, np.ones((8, 8), bool))
        out = up.inject_noise(lm, seed=0)
        assert np.array_equal(out.latents, lm.latents)

    def test_noise_statistics(self):
        # over many draws: mean ~ 0, per-channel std ~ sqrt(0.025) * sigma_c
        rng = np.random.default_rng(11)
        dense = rng.standard_normal((16, 16, 3)).astype(np.float32) \
            * np.array([0.5, 1.0, 2.0], dtype=np.float32)
        lm = LatentMap.from_dense(dense, np.ones((16, 16), bool))
        sigma_c = lm.latents.std(axis=0)
        diffs = []
        for seed in range(40):  # 40 * 256 texels ~ 10^4 draws
            out = up.inject_noise(lm, seed=seed)
            diffs.append(out.latents - lm.latents)
        diffs = np.concatenate(diffs, axis=0)
        n = len(diffs)
        assert n >= 10_000
        std_ratio = diffs.std(axis=0) / sigma_c
        assert np.max(np.abs(std_ratio - np.sqrt(0.025))) < 0.05 * np.sqrt(0.025)
        mean_bound = 3.0 * (sigma_c * np.sqrt(0.025)) / np.sqrt(n)
        assert np.all(np.abs(diffs.mean(axis=0)) < mean_bound * 2)

    def test_seeded_determinism(self):
        rng = np.random.default_rng(12)
        dense = rng.standard_normal((8, 8, 4)).astype(np.float32)
        lm = LatentMap.from_dense(dense, np.ones((8, 8), bool))
        a = up.inject_noise(lm, seed=5)
        b = up.inject_noise(lm, seed=5)
        assert np.array_equal(a.latents, b.latents)

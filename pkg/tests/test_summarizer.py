import math

import numpy as np
import pytest

from cliptrack.rng import SplitMix64, unit_vector
from cliptrack.summarizer import (
    SummarizerConfig,
    batch_loss,
    contrastive_loss,
    forward_summarize,
    gradient,
    init_weights,
    l2_normalize,
    load_weights,
    save_weights,
    weights_from_flat,
)
from cliptrack.training import TrainSample

from .oracles import finite_difference_gradient

SMALL = SummarizerConfig(input_dim=6, model_dim=8, n_layers=2, n_heads=2)


def random_track(rng, length, dim=6):
    return np.stack([rng.gauss_vector(dim) for _ in range(length)])


def random_batch(rng, n_identities=3, per_identity=2, dim=6):
    samples = []
    for ident in range(n_identities):
        for _ in range(per_identity):
            track = random_track(rng, 1 + rng.randint(4), dim)
            samples.append(TrainSample(track, ("positive",) * len(track), ident, 0))
    return samples


class TestForwardSummarize:
    def test_output_shape(self):
        w = init_weights(SMALL, 0)
        out = forward_summarize(w, random_track(SplitMix64(1), 5))
        assert out.shape == (8,)

    def test_deterministic(self):
        w = init_weights(SMALL, 0)
        track = random_track(SplitMix64(2), 4)
        a = forward_summarize(w, track)
        b = forward_summarize(w, track)
        assert np.array_equal(a, b)

    def test_permutation_invariance_bitwise(self):
        w = init_weights(SMALL, 3)
        rng = SplitMix64(4)
        track = random_track(rng, 7)
        base = forward_summarize(w, track)
        for _ in range(20):
            perm = np.argsort([rng.uniform() for _ in range(len(track))])
            assert np.array_equal(forward_summarize(w, track[perm]), base)

    def test_reversal_bitwise(self):
        w = init_weights(SMALL, 5)
        track = random_track(SplitMix64(6), 6)
        assert np.array_equal(forward_summarize(w, track[::-1]), forward_summarize(w, track))

    def test_dimension_mismatch_errors(self):
        w = init_weights(SMALL, 0)
        with pytest.raises(ValueError):
            forward_summarize(w, np.ones((3, 7)))

    def test_empty_track_errors(self):
        w = init_weights(SMALL, 0)
        with pytest.raises(ValueError):
            forward_summarize(w, np.ones((0, 6)))

    def test_single_embedding_accepted(self):
        w = init_weights(SMALL, 0)
        out = forward_summarize(w, np.ones(6))
        assert out.shape == (8,)


class TestContrastiveLoss:
    def test_equal_dots_closed_form(self):
        # all dot products equal -> every exponent is zero -> log(1 + P*N)
        a = np.zeros(4)
        a[0] = 1.0
        for p_count in range(1, 5):
            for n_count in range(1, 5):
                got = contrastive_loss(a, [a] * p_count, [a] * n_count)
                assert got == pytest.approx(math.log(1 + p_count * n_count), abs=1e-12)

    def test_scalar_value(self):
        anchor = np.array([1.0, 0.0])
        pos = [np.array([5.0, 0.0])]
        neg = [np.array([0.0, 3.0])]
        assert contrastive_loss(anchor, pos, neg) == pytest.approx(
            math.log(1 + math.exp(-5.0)), abs=1e-12
        )

    def test_empty_negatives_is_zero(self):
        assert contrastive_loss(np.ones(3), [np.ones(3)], []) == 0.0

    def test_empty_positives_errors(self):
        with pytest.raises(ValueError):
            contrastive_loss(np.ones(3), [], [np.ones(3)])

    def test_overflow_safe(self):
        anchor = np.array([1000.0, 0.0])
        pos = [np.array([0.0, 1.0])]
        neg = [np.array([1000.0, 0.0])]
        got = contrastive_loss(anchor, pos, neg)
        assert math.isfinite(got)
        assert got == pytest.approx(1e6, rel=1e-9)

    def test_monotonicity(self):
        rng = SplitMix64(11)
        for _ in range(50):
            pos = [rng.gauss_vector(4) for _ in range(2)]
            neg = [rng.gauss_vector(4) for _ in range(3)]
            anchor = unit_vector(rng, 4)
            base = contrastive_loss(anchor, pos, neg)
            # pushing a positive closer strictly lowers the loss
            closer = [p + 0.1 * anchor for p in pos[:1]] + pos[1:]
            assert contrastive_loss(anchor, closer, neg) < base
            # pushing a negative closer strictly raises it
            worse = [neg[0] + 0.1 * anchor] + neg[1:]
            assert contrastive_loss(anchor, pos, worse) > base


class TestGradient:
    def test_matches_finite_differences(self):
        rng = SplitMix64(21)
        w = init_weights(SMALL, 22)
        batch = random_batch(rng)
        grads, _ = gradient(w, batch)
        flat = w.flatten()

        def loss_of(p):
            return batch_loss(weights_from_flat(SMALL, p), batch)

        numeric = finite_difference_gradient(loss_of, flat)
        analytic = grads.flatten()
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
        rel = np.abs(analytic - numeric) / denom
        assert rel.max() <= 1e-4, f"max rel err {rel.max():.3e}"

    def test_identical_runs_bitwise(self):
        rng = SplitMix64(31)
        w = init_weights(SMALL, 32)
        batch = random_batch(rng)
        g1, l1 = gradient(w, batch)
        g2, l2 = gradient(w, batch)
        assert l1 == l2
        for a, b in zip(g1.arrays(), g2.arrays()):
            assert np.array_equal(a, b)

    def test_identical_summaries_equal_dot_loss(self):
        w = init_weights(SMALL, 41)
        track = random_track(SplitMix64(42), 3)
        samples = [
            TrainSample(track.copy(), ("positive",) * 3, ident, 0)
            for ident in (0, 0, 1, 1)
        ]
        _, loss = gradient(w, samples)
        # every anchor sees 1 positive and 2 negatives with all-equal dots
        assert loss == pytest.approx(math.log(1 + 1 * 2), abs=1e-9)

    def test_anchor_without_positive_skipped(self):
        rng = SplitMix64(51)
        batch = random_batch(rng, n_identities=2, per_identity=2)
        lonely = TrainSample(random_track(rng, 2), ("positive",) * 2, 99, 0)
        w = init_weights(SMALL, 52)
        _, loss_with = gradient(w, batch + [lonely])
        assert math.isfinite(loss_with)

    def test_all_anchors_skipped_errors(self):
        rng = SplitMix64(61)
        w = init_weights(SMALL, 62)
        batch = [
            TrainSample(random_track(rng, 2), ("positive",) * 2, ident, 0)
            for ident in range(3)
        ]
        with pytest.raises(ValueError):
            gradient(w, batch)


class TestSerialization:
    def test_round_trip_bitwise(self, tmp_path):
        w = init_weights(SummarizerConfig(input_dim=16), 7)
        path = tmp_path / "weights.bin"
        save_weights(w, path)
        loaded = load_weights(path)
        assert loaded.config == w.config
        for a, b in zip(w.arrays(), loaded.arrays()):
            assert np.array_equal(a, b)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(ValueError):
            load_weights(path)

    def test_normalize_helper(self):
        v = l2_normalize(np.array([3.0, 4.0]))
        assert np.allclose(v, [0.6, 0.8])
        with pytest.raises(ValueError):
            l2_normalize(np.zeros(2))

"""Open-set scoring: text probabilities, fusion, classification, baselines."""

import numpy as np
import pytest

from openocc.errors import ValidationError
from openocc.openset import (
    classify_batch,
    classify_voxel,
    fuse_scores,
    logit_max_scores,
    mcm_score,
    msp_score,
    p_text,
)
from openocc.scene import FREE, UNKNOWN
from openocc.vocab import build_prompts, mock_embeddings


def orthonormal(k, c):
    e = np.zeros((k, c))
    e[np.arange(k), np.arange(k)] = 1.0
    return e


class TestTextProbabilities:
    def test_matched_embedding(self):
        e = orthonormal(2, 4)
        probs = p_text(e[0], e, tau2=0.5)
        want = np.exp(2.0) / (np.exp(2.0) + 1.0)
        assert np.isclose(probs[0], want, atol=1e-12)
        assert np.isclose(probs[0], 0.8808, atol=1e-4)

    def test_equidistant_uniform(self):
        e = orthonormal(3, 5)
        f = np.array([0.0, 0.0, 0.0, 2.0, 0.0])
        probs = p_text(f, e, tau2=0.5)
        assert np.allclose(probs, 1.0 / 3.0, atol=1e-12)

    def test_high_temperature_flattens(self):
        rng = np.random.default_rng(0)
        e = rng.standard_normal((4, 16))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        probs = p_text(rng.standard_normal(16), e, tau2=1e3)
        assert probs.max() - probs.min() < 1e-3

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        e = rng.standard_normal((5, 8))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        probs = p_text(rng.standard_normal((20, 8)), e, tau2=0.5)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_norm_rejected(self):
        with pytest.raises(ValidationError):
            p_text(np.zeros(4), orthonormal(2, 4), tau2=0.5)

    def test_bad_temperature(self):
        with pytest.raises(ValidationError):
            p_text(np.ones(4), orthonormal(2, 4), tau2=0.0)


class TestFuse:
    def test_one_hot_gives_one(self):
        s_occ, s_text, s_kn = fuse_scores(
            np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0]))
        assert (s_occ, s_text, s_kn) == (1.0, 1.0, 1.0)

    def test_uniform_over_four(self):
        quarter = np.full(4, 0.25)
        _, _, s_kn = fuse_scores(quarter, quarter)
        assert np.isclose(s_kn, 0.25)

    def test_arithmetic(self):
        po = np.array([0.9, 0.05, 0.05])
        pt = np.array([0.5, 0.25, 0.25])
        s_occ, s_text, s_kn = fuse_scores(po, pt)
        assert np.isclose(s_occ, 0.9) and np.isclose(s_text, 0.5)
        assert np.isclose(s_kn, 0.7)

    def test_rejects_non_probabilities(self):
        with pytest.raises(ValidationError):
            fuse_scores(np.array([0.9, 0.3]), np.array([1.0, 0.0]))
        with pytest.raises(ValidationError):
            fuse_scores(np.array([1.2, -0.2]), np.array([1.0, 0.0]))

    def test_s_kn_bounds(self):
        rng = np.random.default_rng(2)
        k, kp = 5, 3
        lower = 0.5 * (1.0 / k + 1.0 / kp)
        for _ in range(200):
            po = rng.dirichlet(np.ones(k))
            pt = rng.dirichlet(np.ones(kp))
            _, _, s_kn = fuse_scores(po, pt)
            assert lower - 1e-12 <= s_kn <= 1.0 + 1e-12

    def test_logit_max_variant(self):
        s_occ, s_text, s_kn = logit_max_scores(
            np.array([[3.0, -1.0]]), np.array([[0.2, 5.0]]))
        assert s_occ[0] == 3.0 and s_text[0] == 5.0 and s_kn[0] == 4.0


class TestBaselines:
    def test_msp(self):
        assert msp_score(np.array([0.0, 1.0])) == 1.0
        assert np.isclose(msp_score(np.full(17, 1.0 / 17)), 1.0 / 17)

    def test_msp_equals_s_occ(self):
        rng = np.random.default_rng(3)
        po = rng.dirichlet(np.ones(6))
        pt = rng.dirichlet(np.ones(4))
        s_occ, _, _ = fuse_scores(po, pt)
        assert msp_score(po) == s_occ

    def test_mcm_value(self):
        e = orthonormal(2, 4)
        got = mcm_score(e[0], e, temperature=1.0)
        assert np.isclose(got, np.e / (np.e + 1.0), atol=1e-12)
        assert np.isclose(got, 0.7311, atol=1e-4)

    def test_mcm_temperature_keeps_argmax(self):
        rng = np.random.default_rng(4)
        e = rng.standard_normal((5, 12))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        f = rng.standard_normal(12)
        hot = p_text(f, e, 0.08)
        cold = p_text(f, e, 15.0)
        assert np.argmax(hot) == np.argmax(cold)

    def test_mcm_equidistant(self):
        e = orthonormal(4, 6)
        f = np.array([0, 0, 0, 0, 1.0, 0])
        assert np.isclose(mcm_score(f, e, 0.5), 0.25)


class TestClassify:
    def setup_method(self):
        self.vocab = build_prompts(
            ["drivable surface", "manmade", "vegetation", "car"], "C")
        self.emb = mock_embeddings(self.vocab, c_o=32, seed=0)
        # occ head classes: the 4 known + FREE slot at the end
        self.free_class = 4

    def one_hot(self, k, i, eps=0.0):
        p = np.full(k, eps / (k - 1)) if k > 1 else np.ones(1)
        p[i] = 1.0 - eps
        return p

    def test_free_wins_regardless_of_text(self):
        po = self.one_hot(5, self.free_class, eps=0.1)
        out = classify_voxel(po, self.emb.embeddings[3], self.emb.embeddings,
                             self.vocab, delta=0.99, tau2=0.5)
        assert out.predicted_class == FREE

    def test_low_knownness_is_unknown(self):
        po = np.full(5, 0.2)          # s_occ = 0.2
        f = np.ones(32)               # roughly equidistant to mock rows
        out = classify_voxel(po, f, self.emb.embeddings, self.vocab,
                             delta=0.5, tau2=0.5)
        assert out.s_kn < 0.5
        assert out.predicted_class == UNKNOWN

    def test_confident_car(self):
        po = self.one_hot(5, 3, eps=0.02)
        car = self.vocab.class_id("car")
        row = list(self.vocab.prompt_class_ids).index(car)
        f = self.emb.embeddings[row]  # "a car in a scene"
        out = classify_voxel(po, f, self.emb.embeddings, self.vocab,
                             delta=0.5, tau2=0.5)
        assert out.predicted_class == self.vocab.class_id("car")
        assert out.s_kn == 0.5 * (out.s_occ + out.s_text)

    def test_unknown_only_when_occupied(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            po = rng.dirichlet(np.ones(5))
            f = rng.standard_normal(32)
            out = classify_voxel(po, f, self.emb.embeddings, self.vocab,
                                 delta=0.95, tau2=0.5)
            if out.predicted_class == UNKNOWN:
                assert np.argmax(po) != self.free_class

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(6)
        po = rng.dirichlet(np.ones(5), size=40)
        f = rng.standard_normal((40, 32))
        labels, s_occ, s_text, s_kn = classify_batch(
            po, f, self.emb.embeddings, self.vocab, delta=0.6, tau2=0.5)
        for i in range(40):
            one = classify_voxel(po[i], f[i], self.emb.embeddings,
                                 self.vocab, delta=0.6, tau2=0.5)
            assert labels[i] == one.predicted_class
            assert np.isclose(s_kn[i], one.s_kn, atol=1e-12)

    def test_decisions_stable_under_uniform_rescaling(self):
        # With delta = 0 no voxel is UNKNOWN; temperature rescales every
        # similarity uniformly and must not move any argmax.
        rng = np.random.default_rng(7)
        po = rng.dirichlet(np.ones(5), size=30)
        f = rng.standard_normal((30, 32))
        a, *_ = classify_batch(po, f, self.emb.embeddings, self.vocab,
                               delta=0.0, tau2=0.5)
        b, *_ = classify_batch(po, f, self.emb.embeddings, self.vocab,
                               delta=0.0, tau2=5.0)
        assert np.array_equal(a, b)

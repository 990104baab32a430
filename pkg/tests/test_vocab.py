"""Prompt construction, synonym expansion, embeddings, score collapsing."""

import numpy as np
import pytest

from openocc.errors import ValidationError
from openocc.vocab import (
    GROUP_B_MAP,
    NUSCENES_CLASSES,
    ClassVocabulary,
    TextEmbeddingSet,
    build_prompts,
    fine_to_coarse,
    load_embeddings,
    mock_embeddings,
    save_embeddings,
)


class TestBuildPrompts:
    def test_style_c_template(self):
        vocab = build_prompts(["car"], "C")
        assert vocab.prompts == ((0, "a car in a scene"),)

    def test_style_b_terrain_expansion(self):
        vocab = build_prompts(["terrain"], "B")
        assert [t for _, t in vocab.prompts] == \
            ["grass", "grassland", "lawn", "meadow", "turf", "sod"]

    def test_style_a_raw(self):
        vocab = build_prompts(["car", "terrain"], "A")
        assert vocab.prompts == ((0, "car"), (1, "terrain"))

    def test_free_and_other_never_prompted(self):
        for style in ("A", "B", "C"):
            vocab = build_prompts(["free", "others", "other", "car"], style)
            assert all(vocab.known_classes[i] == "car" for i, _ in vocab.prompts)

    def test_sixteen_classes_expand_to_43(self):
        vocab = build_prompts(NUSCENES_CLASSES, "B")
        assert len(vocab.prompts) == 43
        vocab_c = build_prompts(NUSCENES_CLASSES, "C")
        assert len(vocab_c.prompts) == 43
        assert all(t.startswith("a ") and t.endswith(" in a scene")
                   for _, t in vocab_c.prompts)

    def test_unknown_set_removed_from_prompts(self):
        vocab = build_prompts(NUSCENES_CLASSES, "B",
                              unknown_set=("barrier", "bus", "truck"))
        assert len(vocab.prompts) == 43 - 2 - 1 - 1
        prompted = {vocab.known_classes[i] for i, _ in vocab.prompts}
        assert prompted.isdisjoint({"barrier", "bus", "truck"})
        # Held-out classes keep their ids for evaluation.
        assert "barrier" in vocab.known_classes

    def test_unlisted_class_falls_back_to_itself(self):
        vocab = build_prompts(["floor lamp"], "B")
        assert vocab.prompts == ((0, "floor lamp"),)

    def test_bad_inputs(self):
        with pytest.raises(ValidationError):
            build_prompts([], "A")
        with pytest.raises(ValidationError):
            build_prompts(["car"], "D")
        with pytest.raises(ValidationError):
            build_prompts(["car"], "A", unknown_set=("bus",))

    def test_vocabulary_invariant_enforced(self):
        with pytest.raises(ValidationError):
            ClassVocabulary(("free",), ((0, "free"),))
        with pytest.raises(ValidationError):
            ClassVocabulary(("car",), ((0, "car"),), unknown_set=("car",))
        with pytest.raises(ValidationError):
            ClassVocabulary(("car",), ((1, "car"),))


class TestMockEmbeddings:
    def test_two_prompts_orthogonal(self):
        vocab = build_prompts(["car", "bus"], "A")
        emb = mock_embeddings(vocab, c_o=8, seed=0)
        assert emb.embeddings.shape == (2, 8)
        assert np.allclose(np.linalg.norm(emb.embeddings, axis=1), 1.0)
        assert abs(emb.embeddings[0] @ emb.embeddings[1]) < 1e-9

    def test_deterministic(self):
        vocab = build_prompts(NUSCENES_CLASSES, "B")
        a = mock_embeddings(vocab, c_o=128, seed=7)
        b = mock_embeddings(vocab, c_o=128, seed=7)
        assert np.array_equal(a.embeddings, b.embeddings)
        c = mock_embeddings(vocab, c_o=128, seed=8)
        assert not np.array_equal(a.embeddings, c.embeddings)

    def test_sixteen_by_768_separation(self):
        vocab = build_prompts([f"class{i}" for i in range(16)], "A")
        emb = mock_embeddings(vocab, c_o=768, seed=3)
        gram = emb.embeddings @ emb.embeddings.T
        off = gram - np.diag(np.diag(gram))
        assert np.abs(off).max() <= 0.2

    def test_class_ids_follow_prompts(self):
        vocab = build_prompts(["terrain", "car"], "B")
        emb = mock_embeddings(vocab, c_o=64, seed=0)
        assert np.array_equal(emb.class_ids, vocab.prompt_class_ids)
        assert np.array_equal(emb.class_ids, [0] * 6 + [1])


class TestEmbeddingSet:
    def test_rows_renormalized(self):
        emb = TextEmbeddingSet(np.array([[3.0, 4.0], [0.0, 2.0]]),
                               np.array([0, 1]))
        assert np.allclose(np.linalg.norm(emb.embeddings, axis=1), 1.0)
        assert np.allclose(emb.embeddings[0], [0.6, 0.8])

    def test_zero_row_rejected(self):
        with pytest.raises(ValidationError):
            TextEmbeddingSet(np.zeros((1, 4)), np.array([0]))

    def test_id_length_mismatch(self):
        with pytest.raises(ValidationError):
            TextEmbeddingSet(np.eye(3), np.array([0, 1]))

    def test_save_load_roundtrip(self, tmp_path):
        vocab = build_prompts(["car", "terrain"], "C")
        emb = mock_embeddings(vocab, c_o=32, seed=1)
        save_embeddings(tmp_path / "emb", emb, vocab)
        loaded, sidecar = load_embeddings(tmp_path / "emb")
        # f32 on disk: compare after the same round-trip.
        want = emb.embeddings.astype(np.float32).astype(np.float64)
        want /= np.linalg.norm(want, axis=1, keepdims=True)
        assert np.allclose(loaded.embeddings, want, atol=1e-7)
        assert np.array_equal(loaded.class_ids, emb.class_ids)
        assert sidecar["prompts"] == [t for _, t in vocab.prompts]


class TestFineToCoarse:
    def test_identity_when_one_prompt_each(self):
        vocab = build_prompts(["car", "bus"], "A")
        scores = np.array([0.3, 0.9])
        assert np.array_equal(fine_to_coarse(scores, vocab), scores)

    def test_terrain_takes_max(self):
        vocab = build_prompts(["terrain"], "B")
        scores = np.array([0.1, 0.9, 0.2, 0.05, 0.3, 0.0])
        assert fine_to_coarse(scores, vocab) == [0.9]

    def test_matches_bruteforce_group_max(self):
        rng = np.random.default_rng(5)
        vocab = build_prompts(NUSCENES_CLASSES, "B")
        scores = rng.uniform(size=len(vocab.prompts))
        got = fine_to_coarse(scores, vocab)
        ids = vocab.prompt_class_ids
        for slot, cid in enumerate(vocab.prompted_class_ids):
            want = max(s for s, i in zip(scores, ids) if i == cid)
            assert got[slot] == want

    def test_monotone_transform_keeps_argmax(self):
        rng = np.random.default_rng(6)
        vocab = build_prompts(NUSCENES_CLASSES, "B")
        scores = rng.uniform(size=len(vocab.prompts))
        base = np.argmax(fine_to_coarse(scores, vocab))
        warped = np.argmax(fine_to_coarse(np.exp(3 * scores) + 1, vocab))
        assert base == warped

    def test_length_mismatch(self):
        vocab = build_prompts(["car"], "A")
        with pytest.raises(ValidationError):
            fine_to_coarse(np.zeros(2), vocab)


def test_group_b_totals_43():
    assert sum(len(v) for v in GROUP_B_MAP.values()) == 43
    assert set(GROUP_B_MAP) == set(NUSCENES_CLASSES)

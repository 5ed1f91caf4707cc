"""Co-occurrence pipeline: windows, transforms, queries, synonym answering."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nri.textlang import (
    CoocModel,
    SynonymItem,
    Vocabulary,
    build_cooc_model,
    evaluate_synonyms,
    flatten_sentences,
    jaccard,
    make_planted_corpus,
    read_items_tsv,
    tokenize,
    write_items_tsv,
)

pytestmark = pytest.mark.filterwarnings("ignore:no random dimension")


class TestTokenize:
    def test_basic(self):
        assert tokenize("Hello, world! 42\nfoo-bar") == ["hello", "world", "42", "foo", "bar"]

    def test_empty(self):
        assert tokenize("  ... ") == []


class TestVocabulary:
    def test_dense_insertion_ordered_ids(self):
        v = Vocabulary()
        assert v.add("b") == 0
        assert v.add("a") == 1
        assert v.add("b") == 0
        assert len(v) == 2
        assert v.count("b") == 2 and v.count("a") == 1
        assert v.word(0) == "b" and v.id("a") == 1
        assert "a" in v and "zzz" not in v

    def test_unknown_word(self):
        with pytest.raises(KeyError):
            Vocabulary().id("nope")

    def test_from_items_round_trip(self):
        v = Vocabulary.from_items(["x", "y"], [3, 7])
        assert v.id("y") == 1 and v.count("x") == 3


class TestJaccard:
    def test_trivials(self):
        assert jaccard({"a", "b"}, {"a", "b"}) == 1.0
        assert jaccard({"a"}, {"b"}) == 0.0
        assert jaccard(set(), set()) == 0.0
        assert jaccard({"a", "b", "c"}, {"b", "c", "d"}) == 0.5

    @settings(max_examples=100)
    @given(st.sets(st.integers(0, 30)), st.sets(st.integers(0, 30)))
    def test_bounded_and_symmetric(self, a, b):
        j = jaccard(a, b)
        assert 0.0 <= j <= 1.0
        assert j == jaccard(b, a)
        if a:
            assert jaccard(a, a) == 1.0


class TestSynonymItem:
    def test_validation(self):
        with pytest.raises(ValueError):
            SynonymItem("a", ("b", "c", "d"), 0)
        with pytest.raises(ValueError):
            SynonymItem("a", ("b", "c", "d", "a"), 0)
        with pytest.raises(ValueError):
            SynonymItem("a", ("b", "c", "d", "e"), 4)

    def test_tsv_round_trip(self, tmp_path):
        items = [SynonymItem("a", ("b", "c", "d", "e"), 2),
                 SynonymItem("x", ("y", "z", "w", "v"), 0)]
        path = tmp_path / "items.tsv"
        write_items_tsv(items, path)
        assert read_items_tsv(path) == items

    def test_tsv_rejects_malformed(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a\tb\tc\n")
        with pytest.raises(ValueError):
            read_items_tsv(path)


class TestModelConstruction:
    def test_transform_requires_batch(self):
        with pytest.raises(ValueError):
            CoocModel(state_size=8, mode="one_way", capacity=32,
                      transform="sqrt", encode_policy="incremental_raw")

    def test_one_way_needs_capacity(self):
        with pytest.raises(ValueError):
            CoocModel(state_size=8, mode="one_way")

    def test_element_kind_follows_transform(self):
        m = CoocModel(state_size=8, mode="one_way", capacity=32, transform="sqrt")
        assert m.nri.spec.element_kind == "float64"
        m = CoocModel(state_size=8, mode="one_way", capacity=32)
        assert m.nri.spec.element_kind == "int64"
        assert m.encode_policy == "incremental_raw"

    def test_capacity_exhaustion(self):
        m = CoocModel(state_size=2, mode="one_way", capacity=3, chi=2)
        with pytest.raises(ValueError):
            m.ingest(["a", "b", "c", "d"])


class TestWindows:
    def exact_counts(self, tokens, w=2):
        m = CoocModel(state_size=2, mode="one_way", capacity=64, chi=2,
                      transform="sqrt", window_halfwidth=w)
        m.ingest(tokens)
        vocab = m.vocabulary
        return {
            (vocab.word(c), vocab.word(t)): v
            for (c, t), v in m.pending_counts().items()
        }

    def test_three_token_stream(self):
        counts = self.exact_counts(["a", "b", "c"])
        expect = {("b", "a"): 1, ("c", "a"): 1, ("a", "b"): 1,
                  ("c", "b"): 1, ("a", "c"): 1, ("b", "c"): 1}
        assert counts == expect

    def test_interior_token_adds_four_events(self):
        counts = self.exact_counts(["a", "b", "x", "c", "d"])
        assert sum(v for (c, t), v in counts.items() if t == "x") == 4

    def test_window_symmetry(self):
        tokens = tokenize("the quick brown fox jumps over the lazy dog " * 3)
        counts = self.exact_counts(tokens)
        for (c, t), v in counts.items():
            assert counts[(t, c)] == v

    def test_boundary_truncation(self):
        counts = self.exact_counts(["a", "b"])
        assert counts == {("b", "a"): 1, ("a", "b"): 1}


class TestIngestSemantics:
    def test_order_commutes_bitwise_once_ids_are_pinned(self):
        header = ["a", "b", "c", "d", "e"]
        s = ["a", "c", "e", "a", "b"]
        t = ["d", "d", "b", "a", "c"]
        m1 = CoocModel(state_size=4, mode="one_way", capacity=8, chi=2, master_seed=2)
        m2 = CoocModel(state_size=4, mode="one_way", capacity=8, chi=2, master_seed=2)
        m1.ingest(header); m1.ingest(s); m1.ingest(t)
        m2.ingest(header); m2.ingest(t); m2.ingest(s)
        assert np.array_equal(m1.nri.state, m2.nri.state)

    def test_batch_identity_equals_incremental_exactly(self):
        tokens = tokenize("to be or not to be that is the question " * 5)
        inc = CoocModel(state_size=5, mode="one_way", capacity=16, chi=4, master_seed=4)
        inc.ingest(tokens)
        batch = CoocModel(state_size=5, mode="one_way", capacity=16, chi=4, master_seed=4,
                          encode_policy="batch_transformed")
        batch.ingest(tokens)
        batch.finalize()
        assert np.array_equal(inc.nri.state, batch.nri.state)

    def test_finalize_rules(self):
        m = CoocModel(state_size=4, mode="one_way", capacity=8, chi=2, transform="sqrt")
        m.ingest(["a", "b"])
        with pytest.raises(RuntimeError):
            m.top_correlates("a", 1)  # not finalized yet
        m.finalize()
        with pytest.raises(RuntimeError):
            m.finalize()
        with pytest.raises(RuntimeError):
            m.ingest(["c"])

    def test_sqrt_compresses_weight_spectrum(self):
        counts = np.array([400.0, 100.0, 9.0, 4.0, 1.0, 1.0])
        for transform in (np.sqrt,):
            flat = transform(counts)
            before = counts.max() / np.sqrt((counts**2).mean())
            after = flat.max() / np.sqrt((flat**2).mean())
            assert after < before

    def test_two_way_grows_by_extension(self):
        m = CoocModel(state_size=8, mode="two_way", master_seed=3)
        m.ingest(tokenize(" ".join(f"w{i}" for i in range(40))))
        assert len(m.vocabulary) == 40
        assert m.nri.spec.dims[0].component_range >= 40
        assert m.nri.spec.dims[1].component_range >= 40
        assert m.nri.spec.state_shape == (8, 8)
        m.top_correlates("w0", 3)  # readable without finalize


class TestQueries:
    def test_only_cooccurrent_is_top(self):
        tokens = ["x", "y"] * 100
        m = build_cooc_model(tokens, state_size=2, mode="one_way", chi=2, window_halfwidth=1)
        assert m.top_correlates("x", 1) == ["y"]

    def test_large_top_returns_nonzero_entries_sorted(self):
        tokens = ["x", "y"] * 10 + ["q", "r"] * 3
        m = build_cooc_model(tokens, mode="direct", window_halfwidth=1)
        out = m.top_correlates("x", 100)
        assert "y" in out
        assert "q" not in out  # zero correlation entries are dropped
        values = [m.correlate_values("x")[m.vocabulary.id(w)] for w in out]
        assert values == sorted(values, reverse=True)

    def test_unknown_word(self):
        m = build_cooc_model(["a", "b"], state_size=2, mode="one_way", chi=2)
        with pytest.raises(KeyError):
            m.top_correlates("zzz", 1)

    def test_cosine_trivials(self):
        m = CoocModel(state_size=4, mode="direct", capacity=4, window_halfwidth=1)
        m.ingest(["x", "y"] * 50)  # separate streams: no junction co-occurrence
        m.ingest(["p", "q"] * 50)
        assert m.cosine("x", "x") == pytest.approx(1.0)
        assert m.cosine("x", "p") == 0.0  # disjoint contexts
        two = build_cooc_model(["x", "y"] * 5, state_size=4, mode="two_way", chi=2)
        with pytest.raises(ValueError):
            two.cosine("x", "y")


class TestToyCorpusAgainstLosslessOracle:
    """Reduced pipeline vs the all-direct model on a count-hierarchy corpus."""

    @staticmethod
    def corpus(probes=6, seed=0):
        rng = np.random.default_rng(seed)
        fillers = [f"f{i}" for i in range(2000)]
        sentences = []
        schedule = [40, 32, 26, 21, 17, 8, 4, 2]
        for p in range(probes):
            for r, count in enumerate(schedule):
                ctx = f"c{p}x{r}"
                for _ in range(count):
                    pad = [fillers[int(rng.integers(0, 2000))] for _ in range(4)]
                    sentences.append(pad[:2] + [ctx, f"probe{p}"] + pad[2:])
        for _ in range(800):
            sentences.append([fillers[int(rng.integers(0, 2000))] for _ in range(8)])
        sentences.append(list(fillers))
        order = rng.permutation(len(sentences))
        return [t for i in order for t in sentences[i]]

    def test_direct_equals_exact_counts_and_reduced_overlaps(self):
        tokens = self.corpus()
        direct = build_cooc_model(tokens, mode="direct", master_seed=1)
        # independent count oracle over the same window
        ref = CoocModel(state_size=2, mode="one_way", capacity=4096, chi=2, transform="sqrt")
        ref.ingest(tokens)
        exact = ref.pending_counts()
        vocab = direct.vocabulary
        for p in range(6):
            probe = f"probe{p}"
            assert vocab.count(probe) >= 50
            j = vocab.id(probe)
            expected = {c: v for (c, t), v in exact.items() if t == j}
            decoded = direct.correlate_values(probe)
            for c, v in expected.items():
                assert decoded[c] == v
            top = direct.top_correlates(probe, 5)
            oracle = sorted(expected.items(), key=lambda cv: (-cv[1], cv[0]))[:5]
            assert [vocab.id(w) for w in top] == [c for c, _ in oracle]
        reduced = build_cooc_model(tokens, mode="one_way", reduction=4, master_seed=2)
        for p in range(6):
            a = set(direct.top_correlates(f"probe{p}", 5))
            b = set(reduced.top_correlates(f"probe{p}", 5))
            assert len(a & b) >= 4


class TestSynonyms:
    @staticmethod
    def small_planted():
        sentences, items = make_planted_corpus(
            pairs=6, contexts_per_topic=20, filler_words=1200,
            topic_sentences=120, filler_sentences=700, seed=42,
        )
        return flatten_sentences(sentences), items

    def test_tie_break_goes_to_lowest_index(self):
        tokens = []
        for word in ("g", "a1", "a2", "a3", "a4"):
            tokens += ["x", word, "y"] * 5
        m = build_cooc_model(tokens, mode="direct", window_halfwidth=1)
        item = SynonymItem("g", ("a1", "a2", "a3", "a4"), 3)
        assert m.answer_synonym(item, 2) == 0  # identical top-lists everywhere

    def test_unknown_alternative_never_chosen(self):
        tokens, _ = self.small_planted()
        m = build_cooc_model(tokens, mode="direct")
        item = SynonymItem("syna0", ("zzz1", "synb0", "zzz2", "zzz3"), 1)
        assert m.answer_synonym(item, 30) == 1
        with pytest.raises(KeyError):
            m.answer_synonym(SynonymItem("zzz", ("a", "b", "c", "d"), 0), 5)
        with pytest.raises(KeyError):
            m.answer_synonym(SynonymItem("syna0", ("z1", "z2", "z3", "z4"), 0), 5)

    def test_alternative_reordering_picks_same_word(self):
        tokens, items = self.small_planted()
        m = build_cooc_model(tokens, mode="one_way", reduction=4,
                             transform="sqrt", master_seed=5)
        item = items[0]
        chosen = item.alternatives[m.answer_synonym(item, 40)]
        rotated = SynonymItem(item.given, item.alternatives[1:] + item.alternatives[:1],
                              (item.answer - 1) % 4)
        assert rotated.alternatives[m.answer_synonym(rotated, 40)] == chosen

    def test_cosine_separates_planted_pairs(self):
        tokens, _ = self.small_planted()
        wins = 0
        for seed in range(10):
            m = build_cooc_model(tokens, mode="one_way", reduction=4,
                                 transform="sqrt", master_seed=seed)
            wins += m.cosine("syna0", "synb0") > m.cosine("syna0", "synb3")
        assert wins >= 9

    def test_planted_benchmark_accuracy(self):
        tokens, items = self.small_planted()
        mean, _std, per_seed = evaluate_synonyms(
            tokens, items, top=40, method="jaccard_toplist", seeds=range(3),
            mode="one_way", reduction=4, transform="sqrt",
        )
        assert mean >= 0.9

    def test_lossless_single_item_is_certain(self):
        tokens, items = self.small_planted()
        mean, std, per_seed = evaluate_synonyms(
            tokens, items[:1], top=40, method="jaccard_toplist", seeds=[0],
            mode="direct",
        )
        assert mean == 1.0 and std == 0.0

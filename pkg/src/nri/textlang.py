"""Word co-occurrence semantics on top of the reduced tensor.

A rank-2 tensor accumulates (context word, target word) co-occurrence weights
from a sliding window over a token stream.  Queries decode a word's column,
rank the context words, and compare words either by the Jaccard overlap of
their top correlate lists or by the cosine of their state columns.

Count transforms (sqrt, log1p) tame high-frequency words but need the final
counts, so they force batch mode: raw counts accumulate in an exact map and
are encoded once at finalize time.  Identity-transform models stay fully
incremental.

TOEFL-style items are served by a synthetic planted-synonym corpus: pairs of
pseudo-words share a topic-specific context distribution, sibling topics
share half their context vocabulary, and an optional stop-token flood
reproduces the damage that untransformed high frequencies do.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import DimensionSpec, NriSpec, NriTensor, ranked_order

__all__ = [
    "Vocabulary",
    "CoocModel",
    "SynonymItem",
    "tokenize",
    "jaccard",
    "build_cooc_model",
    "evaluate_synonyms",
    "make_planted_corpus",
    "read_items_tsv",
    "write_items_tsv",
]

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")

TRANSFORMS = ("identity", "sqrt", "log1p")
POLICIES = ("incremental_raw", "batch_transformed")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs; no stemming."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


class Vocabulary:
    """Insertion-ordered word <-> dense id bijection with occurrence counts."""

    def __init__(self):
        self._ids: dict[str, int] = {}
        self._words: list[str] = []
        self._counts: list[int] = []

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    def add(self, word: str) -> int:
        """Register an occurrence, assigning the next id on first sight."""
        idx = self._ids.get(word)
        if idx is None:
            idx = len(self._words)
            self._ids[word] = idx
            self._words.append(word)
            self._counts.append(1)
        else:
            self._counts[idx] += 1
        return idx

    def id(self, word: str) -> int:
        try:
            return self._ids[word]
        except KeyError:
            raise KeyError(f"unknown word {word!r}") from None

    def word(self, idx: int) -> str:
        return self._words[idx]

    def count(self, word: str) -> int:
        return self._counts[self.id(word)]

    def words(self) -> list[str]:
        return list(self._words)

    @classmethod
    def from_items(cls, words: Sequence[str], counts: Sequence[int]) -> "Vocabulary":
        vocab = cls()
        for word, count in zip(words, counts):
            vocab.add(word)
            vocab._counts[-1] = count
        return vocab


def jaccard(a: set, b: set) -> float:
    """|A & B| / |A | B|; zero when both sets are empty."""
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


@dataclass(frozen=True)
class SynonymItem:
    """One five-word synonym question: a given word and four alternatives."""

    given: str
    alternatives: tuple[str, str, str, str]
    answer: int

    def __post_init__(self):
        object.__setattr__(self, "alternatives", tuple(self.alternatives))
        if len(self.alternatives) != 4:
            raise ValueError("exactly four alternatives required")
        if not 0 <= self.answer < 4:
            raise ValueError("answer index must be in [0, 4)")
        if len({self.given, *self.alternatives}) != 5:
            raise ValueError("all five words must be distinct")


class CoocModel:
    """Sliding-window co-occurrence matrix behind a rank-2 reduced tensor.

    Dimension 0 indexes context words, dimension 1 target words.  In one_way
    mode dimension 0 is reduced and dimension 1 is direct (one physical column
    per word, all columns sharing the dimension-0 index vectors); two_way
    reduces both dimensions and grows them dynamically as the vocabulary
    grows.  direct mode reduces nothing and serves as the lossless oracle the
    reduced pipeline is judged against.
    """

    def __init__(
        self,
        *,
        state_size: int,
        mode: str = "one_way",
        window_halfwidth: int = 2,
        transform: str = "identity",
        encode_policy: str | None = None,
        chi: int = 8,
        master_seed: int = 0,
        capacity: int | None = None,
        memory_cap: int | None = None,
    ):
        if mode not in ("one_way", "two_way", "direct"):
            raise ValueError(f"mode must be one_way, two_way or direct, got {mode!r}")
        if transform not in TRANSFORMS:
            raise ValueError(f"transform must be one of {TRANSFORMS}")
        if window_halfwidth < 1:
            raise ValueError("window_halfwidth must be >= 1")
        if encode_policy is None:
            encode_policy = "incremental_raw" if transform == "identity" else "batch_transformed"
        if encode_policy not in POLICIES:
            raise ValueError(f"encode_policy must be one of {POLICIES}")
        if transform != "identity" and encode_policy != "batch_transformed":
            raise ValueError("count transforms require batch_transformed: the "
                             "transform needs final counts, which breaks incrementality")
        self.mode = mode
        self.window_halfwidth = window_halfwidth
        self.transform = transform
        self.encode_policy = encode_policy
        self.vocabulary = Vocabulary()
        self._pending: Counter = Counter()
        self._finalized = False
        element_kind = "int64" if transform == "identity" else "float64"
        if mode == "two_way":
            start = max(state_size, 2)
            self.capacity = None
            dims = (
                DimensionSpec.random(start, state_size, chi),
                DimensionSpec.random(start, state_size, chi),
            )
        else:
            if capacity is None:
                raise ValueError(f"{mode} mode needs a vocabulary capacity up front "
                                 "(direct dimensions cannot grow)")
            self.capacity = capacity
            if mode == "one_way":
                if state_size > capacity:
                    raise ValueError("state_size must not exceed the vocabulary capacity")
                dims = (
                    DimensionSpec.random(capacity, state_size, chi),
                    DimensionSpec.direct(capacity),
                )
            else:
                dims = (DimensionSpec.direct(capacity), DimensionSpec.direct(capacity))
        self.nri = NriTensor(
            NriSpec(dims, master_seed=master_seed, element_kind=element_kind),
            memory_cap=memory_cap,
        )

    @classmethod
    def from_parts(
        cls,
        tensor: NriTensor,
        vocabulary: Vocabulary,
        *,
        window_halfwidth: int,
        transform: str,
        mode: str,
        encode_policy: str,
    ) -> "CoocModel":
        """Reassemble a model from a loaded tensor and its vocabulary sidecar."""
        model = cls.__new__(cls)
        model.mode = mode
        model.window_halfwidth = window_halfwidth
        model.transform = transform
        model.encode_policy = encode_policy
        model.capacity = None if mode == "two_way" else tensor.spec.dims[1].component_range
        if model.capacity is not None and len(vocabulary) > model.capacity:
            raise ValueError("vocabulary larger than the tensor's direct dimension")
        model.nri = tensor
        model.vocabulary = vocabulary
        model._pending = Counter()
        model._finalized = encode_policy == "batch_transformed"
        return model

    # -- ingestion ----------------------------------------------------------

    def _register(self, word: str) -> int:
        idx = self.vocabulary.add(word)
        if self.mode == "two_way":
            for dim in (0, 1):
                have = self.nri.spec.dims[dim].component_range
                if idx >= have:
                    self.nri.extend_dimension(dim, max(idx + 1, 2 * have))
        elif idx >= self.capacity:
            raise ValueError(f"vocabulary exceeded fixed capacity {self.capacity}")
        return idx

    def ingest(self, tokens: Iterable[str]) -> None:
        """Accumulate co-occurrences from a token stream.

        Every token pairs with its neighbours up to window_halfwidth away on
        both sides, truncated at the stream boundaries; each event adds one to
        the (neighbour, token) component.  Unknown words are registered on
        first sight.
        """
        if self._finalized:
            raise RuntimeError("model already finalized")
        ids = [self._register(t) for t in tokens]
        pairs: Counter = Counter()
        w = self.window_halfwidth
        n = len(ids)
        for p, tgt in enumerate(ids):
            lo = max(0, p - w)
            hi = min(n, p + w + 1)
            for q in range(lo, hi):
                if q != p:
                    pairs[(ids[q], tgt)] += 1
        if self.encode_policy == "incremental_raw":
            self._encode_pairs(pairs, transform=False)
        else:
            self._pending.update(pairs)

    def finalize(self) -> None:
        """Encode accumulated counts (batch mode); afterwards the model is read-only."""
        if self._finalized:
            raise RuntimeError("model already finalized")
        if self.encode_policy == "batch_transformed":
            self._encode_pairs(self._pending, transform=True)
            self._pending = Counter()
            self._finalized = True

    def pending_counts(self) -> dict[tuple[int, int], int]:
        """Exact raw counts awaiting finalize (batch mode only)."""
        return dict(self._pending)

    def _encode_pairs(self, pairs: Counter, *, transform: bool) -> None:
        by_target: dict[int, list[tuple[int, int]]] = {}
        for (ctx, tgt), count in pairs.items():
            by_target.setdefault(tgt, []).append((ctx, count))
        for tgt, entries in by_target.items():
            idx = np.array([c for c, _ in entries], dtype=np.int64)
            counts = np.array([v for _, v in entries], dtype=np.float64)
            if transform and self.transform == "sqrt":
                weights = np.sqrt(counts)
            elif transform and self.transform == "log1p":
                weights = np.log1p(counts)
            else:
                weights = counts.astype(np.int64)
            self.nri.encode_fiber(0, {1: tgt}, (idx, weights))

    def _require_readable(self) -> None:
        if self.encode_policy == "batch_transformed" and not self._finalized:
            raise RuntimeError("batch model must be finalized before queries")

    # -- queries --------------------------------------------------------------

    def correlate_values(self, word: str) -> np.ndarray:
        """Decoded co-occurrence weight of every known context word with `word`."""
        self._require_readable()
        j = self.vocabulary.id(word)
        values = self.nri.decode_fiber(0, {1: j})
        return values[: len(self.vocabulary)]

    def top_correlates(self, word: str, top: int) -> list[str]:
        """The `top` context words with the highest decoded weights, descending.

        Words whose decoded correlation is exactly zero are dropped, so a
        `top` at or beyond the vocabulary size returns every word with a
        nonzero decoded correlation, sorted.
        """
        if top < 1:
            raise ValueError("top must be >= 1")
        values = self.correlate_values(word)
        order = ranked_order(values)[: min(top, len(values))]
        return [self.vocabulary.word(int(i)) for i in order if values[i] != 0.0]

    def cosine(self, word_a: str, word_b: str) -> float:
        """Cosine of the two full-length state columns (one_way or direct)."""
        if self.mode == "two_way":
            raise ValueError("cosine needs materialized context vectors; "
                             "two_way does not keep per-word state columns")
        self._require_readable()
        a = self.nri.state[:, self.vocabulary.id(word_a)].astype(np.float64)
        b = self.nri.state[:, self.vocabulary.id(word_b)].astype(np.float64)
        na = np.linalg.norm(a)
        nb = np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            return 0.0
        return float(a @ b / (na * nb))

    def answer_synonym(self, item: SynonymItem, top: int, method: str = "jaccard_toplist") -> int:
        """Pick the alternative most similar to the given word.

        Unknown alternatives score -inf and are never chosen; ties resolve to
        the lowest index.
        """
        if method not in ("jaccard_toplist", "cosine"):
            raise ValueError(f"unknown method {method!r}")
        if item.given not in self.vocabulary:
            raise KeyError(f"given word {item.given!r} not in vocabulary")
        if all(alt not in self.vocabulary for alt in item.alternatives):
            raise KeyError("no alternative is in the vocabulary")
        scores = []
        if method == "jaccard_toplist":
            w0 = set(self.top_correlates(item.given, top))
            for alt in item.alternatives:
                if alt not in self.vocabulary:
                    scores.append(-math.inf)
                else:
                    scores.append(jaccard(w0, set(self.top_correlates(alt, top))))
        else:
            for alt in item.alternatives:
                if alt not in self.vocabulary:
                    scores.append(-math.inf)
                else:
                    scores.append(self.cosine(item.given, alt))
        return int(np.argmax(scores))


def build_cooc_model(tokens: Sequence[str], *, state_size: int | None = None,
                     reduction: float | None = None, **kwargs) -> CoocModel:
    """Build and finalize a model over a fixed token list.

    Sizes the one_way capacity to the exact vocabulary; state_size may be
    given directly or as a target reduction ratio over that vocabulary.
    """
    vocab_size = len(set(tokens))
    mode = kwargs.get("mode", "one_way")
    if mode == "direct":
        state_size = vocab_size
    elif state_size is None:
        if reduction is None:
            raise ValueError("give state_size or reduction")
        r = 1 if mode == "one_way" else 2
        state_size = max(2, int(round(vocab_size * reduction ** (-1.0 / r))))
    if mode in ("one_way", "direct"):
        kwargs.setdefault("capacity", vocab_size)
    model = CoocModel(state_size=state_size, **kwargs)
    model.ingest(tokens)
    if model.encode_policy == "batch_transformed":
        model.finalize()
    return model


def evaluate_synonyms(
    tokens: Sequence[str],
    items: Sequence[SynonymItem],
    *,
    top: int,
    method: str = "jaccard_toplist",
    seeds: Sequence[int],
    **model_kwargs,
) -> tuple[float, float, list[float]]:
    """Accuracy mean and std across full model rebuilds with fresh index vectors."""
    per_seed = []
    for seed in seeds:
        model = build_cooc_model(tokens, master_seed=seed, **model_kwargs)
        hits = sum(model.answer_synonym(it, top, method) == it.answer for it in items)
        per_seed.append(hits / len(items))
    arr = np.asarray(per_seed)
    return float(arr.mean()), float(arr.std()), per_seed


# -- synthetic planted-synonym corpus ---------------------------------------


def make_planted_corpus(
    *,
    pairs: int = 10,
    contexts_per_topic: int = 30,
    filler_words: int = 3600,
    topic_sentences: int = 250,
    filler_sentences: int = 2500,
    stop_rate: float = 0.0,
    seed: int = 0,
) -> tuple[list[list[str]], list[SynonymItem]]:
    """Generate sentences where synonym pairs share context distributions.

    Each topic owns two target pseudo-words (the planted synonym pair) and a
    context vocabulary; sibling topics (2q, 2q+1) share half of it, making
    their targets the hard distractors.  Filler sentences pad the vocabulary
    so the reduced pipeline runs at realistic dimensionality.  stop_rate
    controls a flood of three high-frequency stop tokens inserted everywhere,
    roughly stop_rate * len(sentence) per sentence.

    Returns the sentences and one item per (pair, direction).
    """
    if pairs < 4:
        raise ValueError("need at least 4 pairs to build distractor sets")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x701C,)))
    synonyms = [(f"syna{p}", f"synb{p}") for p in range(pairs)]
    shared = [[f"shr{q}x{c}" for c in range(contexts_per_topic // 2)] for q in range((pairs + 1) // 2)]
    topics = []
    for p in range(pairs):
        own = [f"ctx{p}x{c}" for c in range(contexts_per_topic - contexts_per_topic // 2)]
        topics.append(own + shared[p // 2])
    fillers = [f"w{i}" for i in range(filler_words)]
    stops = ["stopa", "stopb", "stopc"]

    sentences: list[list[str]] = []
    for p in range(pairs):
        words = topics[p]
        for _ in range(topic_sentences):
            target = synonyms[p][int(rng.integers(0, 2))]
            ctx = [words[int(rng.integers(0, len(words)))] for _ in range(4)]
            sentences.append(ctx[:2] + [target] + ctx[2:])
    for _ in range(filler_sentences):
        length = int(rng.integers(5, 12))
        sentences.append([fillers[int(rng.integers(0, filler_words))] for _ in range(length)])
    # every filler registered at least once, so vocabulary size is deterministic
    sentences.append(list(fillers))

    if stop_rate > 0:
        for s in sentences:
            extra = int(rng.binomial(len(s) + 2, min(stop_rate, 1.0)))
            for _ in range(extra):
                s.insert(int(rng.integers(0, len(s) + 1)), stops[int(rng.integers(0, 3))])

    order = rng.permutation(len(sentences))
    sentences = [sentences[i] for i in order]

    items = []
    for p in range(pairs):
        sibling = p + 1 if p % 2 == 0 else p - 1
        others = [q for q in range(pairs) if q not in (p, sibling)]
        for given, answer in ((synonyms[p][0], synonyms[p][1]), (synonyms[p][1], synonyms[p][0])):
            alts = [answer, synonyms[sibling][int(rng.integers(0, 2))]]
            for o in rng.choice(others, size=2, replace=False):
                alts.append(synonyms[int(o)][int(rng.integers(0, 2))])
            perm = rng.permutation(4)
            shuffled = tuple(alts[int(i)] for i in perm)
            items.append(SynonymItem(given, shuffled, int(np.where(perm == 0)[0][0])))
    return sentences, items


def flatten_sentences(sentences: Sequence[Sequence[str]]) -> list[str]:
    return [t for s in sentences for t in s]


# -- items file format ---------------------------------------------------------


def read_items_tsv(path) -> list[SynonymItem]:
    """TSV columns: given, alt1..alt4, answer_index.  Blank lines skipped."""
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 tab-separated columns")
            items.append(SynonymItem(parts[0], tuple(parts[1:5]), int(parts[5])))
    return items


def write_items_tsv(items: Sequence[SynonymItem], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for it in items:
            fh.write("\t".join([it.given, *it.alternatives, str(it.answer)]) + "\n")

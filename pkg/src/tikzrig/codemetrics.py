"""Code-side similarity over TeX token streams.

Two complementary views are combined: a token-level extended edit
distance mapped through an exponential kernel (structural divergence),
and a BLEU variant that masks the corpus's most frequent n-grams so
ubiquitous boilerplate (\\draw, \\node, braces) cannot inflate the score.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyCorpus
from .texlex import TokenStream, lex_normalized

INF = float("inf")


@dataclass(frozen=True)
class EedCosts:
    """Edit operation costs; jump=inf disables non-monotonic alignment."""

    insertion: float = 1.0
    substitution: float = 1.0
    deletion: float = 0.2
    jump: float = 2.0
    coverage_penalty: float = 0.3

    def __post_init__(self):
        for name in ("insertion", "substitution", "deletion", "jump", "coverage_penalty"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def levenshtein(cls) -> "EedCosts":
        """Unit costs with jumps disabled (plain normalized Levenshtein)."""
        return cls(insertion=1.0, substitution=1.0, deletion=1.0, jump=INF, coverage_penalty=0.0)


def eed(a: TokenStream, b: TokenStream, costs: EedCosts | None = None) -> float:
    """Extended edit distance from hypothesis ``a`` to reference ``b``.

    Row-wise DP over the reference with insertion/substitution/deletion
    moves; when jumps are enabled, after consuming each hypothesis token
    the alignment may teleport along the reference from the cheapest
    column for the jump cost.  Jump landings are counted and multiple
    coverage is charged rho per extra visit; the final score is
    (e + rho*v) / (|ref| + rho*v), which with jumps disabled reduces to
    the edit cost normalized by reference length.
    """
    costs = costs or EedCosts()
    hyp = a.lexemes()
    ref = b.lexemes()
    if not hyp and not ref:
        return 0.0
    n = len(ref)
    jumps_on = math.isfinite(costs.jump)

    row = [j * costs.insertion for j in range(n + 1)]
    visits = [0] * (n + 1)
    for tok in hyp:
        new = [row[0] + costs.deletion] + [0.0] * n
        for j in range(1, n + 1):
            sub = row[j - 1] + (0.0 if tok == ref[j - 1] else costs.substitution)
            ins = new[j - 1] + costs.insertion
            dele = row[j] + costs.deletion
            new[j] = min(sub, ins, dele)
        if jumps_on:
            best = min(range(n + 1), key=new.__getitem__)  # leftmost minimum
            visits[best] += 1
            bar = new[best] + costs.jump
            for j in range(n + 1):
                if bar < new[j]:
                    new[j] = bar
        row = new
    errors = row[n]
    extra = sum(v - 1 for v in visits if v > 1)
    rho = costs.coverage_penalty
    denom = max(n, 1) + rho * extra
    return (errors + rho * extra) / denom


def ted_similarity(code_a: str, code_b: str, tau_ted: float = 0.4,
                   costs: EedCosts | None = None) -> float:
    """exp(-EED/tau) over the lexed, normalized sources (``code_b`` is the reference)."""
    if tau_ted <= 0:
        raise ValueError("tau_ted must be positive")
    d = eed(lex_normalized(code_a), lex_normalized(code_b), costs)
    return math.exp(-d / tau_ted)


# --------------------------------------------------------------------------
# CrystalBLEU


def _ngrams(lexemes: Sequence[str], order: int) -> Counter:
    return Counter(
        tuple(lexemes[i:i + order]) for i in range(len(lexemes) - order + 1)
    )


@dataclass(frozen=True)
class TrivialNgramSet:
    """Top-k most frequent n-grams of a corpus, shared across metric calls."""

    k: int
    max_order: int
    entries: frozenset  # of (order, lexeme tuple)
    corpus_id: str = ""

    def __contains__(self, gram: tuple) -> bool:
        return (len(gram), gram) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def to_json(self) -> str:
        items = sorted((order, list(gram)) for order, gram in self.entries)
        return json.dumps(
            {"version": 1, "corpus_id": self.corpus_id, "k": self.k,
             "max_order": self.max_order, "entries": items},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "TrivialNgramSet":
        data = json.loads(text)
        entries = frozenset((order, tuple(gram)) for order, gram in data["entries"])
        return cls(data["k"], data["max_order"], entries, data.get("corpus_id", ""))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "TrivialNgramSet":
        return cls.from_json(Path(path).read_text())


def mine_trivial_ngrams(
    corpus: Iterable[TokenStream], k: int = 500, max_order: int = 4, corpus_id: str = ""
) -> TrivialNgramSet:
    """Count all n-grams of orders 1..max_order and keep the k most frequent.

    The top-k selection pools every order together; ties break on the
    n-gram itself so mining the same corpus twice is bit-identical.
    """
    if k < 1 or max_order < 1:
        raise ValueError("k and max_order must be >= 1")
    counts: Counter = Counter()
    seen_any = False
    for stream in corpus:
        seen_any = True
        lexemes = stream.lexemes()
        for order in range(1, max_order + 1):
            counts.update(_ngrams(lexemes, order))
    if not seen_any:
        raise EmptyCorpus("cannot mine trivial n-grams from an empty corpus")
    ranked = sorted(counts.items(), key=lambda item: (-item[1], len(item[0]), item[0]))
    top = frozenset((len(gram), gram) for gram, _ in ranked[:k])
    return TrivialNgramSet(k, max_order, top, corpus_id)


def count_distinct_ngrams(corpus: Iterable[TokenStream], max_order: int = 4) -> int:
    """Number of distinct n-grams of orders 1..max_order across a corpus."""
    seen: set = set()
    for stream in corpus:
        lexemes = stream.lexemes()
        for order in range(1, max_order + 1):
            seen.update(_ngrams(lexemes, order))
    return len(seen)


def crystal_bleu(
    hyp: str, ref: str, trivial: TrivialNgramSet, max_order: int = 4
) -> float:
    """BLEU with the trivially-shared n-grams masked out of both counts.

    Modified precisions use clipped counts over non-trivial n-grams only;
    orders whose masked denominator is zero are skipped from the geometric
    mean (score 0 when every order is skipped).  The standard exponential
    brevity penalty on raw token lengths is kept.
    """
    hyp_lex = lex_normalized(hyp).lexemes()
    ref_lex = lex_normalized(ref).lexemes()
    if not hyp_lex:
        return 0.0

    log_sum = 0.0
    used = 0
    for order in range(1, max_order + 1):
        hyp_counts = _ngrams(hyp_lex, order)
        ref_counts = _ngrams(ref_lex, order)
        denom = 0
        num = 0
        for gram, count in hyp_counts.items():
            if gram in trivial:
                continue
            denom += count
            num += min(count, ref_counts.get(gram, 0))
        if denom == 0:
            continue  # order carries no signal; skip it
        if num == 0:
            return 0.0  # a scored order with zero overlap floors BLEU
        log_sum += math.log(num / denom)
        used += 1
    if used == 0:
        return 0.0
    geo = math.exp(log_sum / used)
    if len(hyp_lex) >= len(ref_lex):
        bp = 1.0
    else:
        bp = math.exp(1.0 - len(ref_lex) / len(hyp_lex))
    return bp * geo


@dataclass(frozen=True)
class CodeScores:
    d_eed: float
    s_ted: float
    crystal_bleu: float
    s_code: float
    gamma: float


def code_consistency(
    code_a: str,
    code_b: str,
    trivial: TrivialNgramSet,
    gamma: float = 0.4,
    tau_ted: float = 0.4,
    costs: EedCosts | None = None,
) -> CodeScores:
    """Convex mix of CrystalBLEU and the kernelized edit-distance score.

    ``code_a`` is the primal/reference program, ``code_b`` the
    reconstruction being scored against it.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    d = eed(lex_normalized(code_b), lex_normalized(code_a), costs)
    s_ted = math.exp(-d / tau_ted)
    cb = crystal_bleu(code_b, code_a, trivial)
    s_code = gamma * cb + (1.0 - gamma) * s_ted
    return CodeScores(d_eed=d, s_ted=s_ted, crystal_bleu=cb, s_code=s_code, gamma=gamma)

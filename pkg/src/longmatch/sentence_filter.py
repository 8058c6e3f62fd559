"""Unsupervised sentence-level noise filtering.

The sentences of both documents are pooled into one united collection and
linked by word-overlap similarity, within and across documents, so that
cross-document matching signal raises a sentence's PageRank. The top
lambda sentences per document survive and are assembled into the framed
token sequence consumed by the encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import Document, Sentence, Vocab
from .errors import SequenceTooShort
from .pagerank import PageRankParams, PageRankScores, pagerank, rank_order, validate_stochastic
from .transformer import TokenSequence

DEFAULT_LAMBDA = 5
ORIGIN_A = "a"
ORIGIN_B = "b"


@dataclass(frozen=True)
class SentenceGraph:
    """United sentence collection with symmetric overlap weights.

    Nodes are all sentences of document A followed by all of document B;
    the diagonal is zero (no self links).
    """

    sentences: tuple[Sentence, ...]
    weights: np.ndarray
    origins: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class FilteredPair:
    """Top-scored sentences per document, kept in original order."""

    selected_a: tuple[Sentence, ...]
    selected_b: tuple[Sentence, ...]
    scores: PageRankScores


def sentence_similarity(s_i: Sentence, s_j: Sentence) -> float:
    """Distinct shared content words over the sum of log content lengths.

    Returns 0 when either sentence has at most one content token (the log
    denominator would vanish) or when the overlap is empty.
    """
    n_i = len(s_i.content_tokens)
    n_j = len(s_j.content_tokens)
    if n_i <= 1 or n_j <= 1:
        return 0.0
    overlap = len(set(s_i.content_tokens) & set(s_j.content_tokens))
    if overlap == 0:
        return 0.0
    return overlap / (math.log(n_i) + math.log(n_j))


def build_sentence_graph(doc_a: Document, doc_b: Document) -> SentenceGraph:
    """All pairwise similarities over the united sentence collection."""
    sentences = doc_a.sentences + doc_b.sentences
    origins = (ORIGIN_A,) * len(doc_a.sentences) + (ORIGIN_B,) * len(doc_b.sentences)
    n = len(sentences)
    token_sets = [set(s.content_tokens) for s in sentences]
    lengths = [len(s.content_tokens) for s in sentences]
    logs = [math.log(c) if c > 1 else 0.0 for c in lengths]

    weights = np.zeros((n, n))
    for i in range(n):
        if lengths[i] <= 1:
            continue
        set_i = token_sets[i]
        log_i = logs[i]
        for j in range(i + 1, n):
            if lengths[j] <= 1:
                continue
            overlap = len(set_i & token_sets[j])
            if overlap:
                w = overlap / (log_i + logs[j])
                weights[i, j] = w
                weights[j, i] = w
    return SentenceGraph(sentences=sentences, weights=weights, origins=origins)


def _column_normalize(weights: np.ndarray) -> np.ndarray:
    """Each node distributes its outgoing weight proportionally; all-zero
    columns are left zero and handled as dangling nodes downstream."""
    col_sums = weights.sum(axis=0)
    normed = np.zeros_like(weights)
    nonzero = col_sums > 0
    normed[:, nonzero] = weights[:, nonzero] / col_sums[nonzero]
    return normed


def score_sentences(graph: SentenceGraph,
                    params: PageRankParams | None = None) -> PageRankScores:
    """PageRank importance of every sentence in the united graph."""
    params = params if params is not None else PageRankParams()
    adj = validate_stochastic(_column_normalize(graph.weights))
    return pagerank(adj, params)


def select_top_sentences(graph: SentenceGraph, lam: int = DEFAULT_LAMBDA,
                         params: PageRankParams | None = None) -> FilteredPair:
    """Keep the min(lambda, L) best-scored sentences of each document.

    Selection follows the global rank order (score descending, index
    ascending on ties); the survivors are re-emitted in original document
    order.
    """
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    scores = score_sentences(graph, params)
    order = rank_order(scores)

    quota = {
        ORIGIN_A: min(lam, graph.origins.count(ORIGIN_A)),
        ORIGIN_B: min(lam, graph.origins.count(ORIGIN_B)),
    }
    chosen: dict[str, list[int]] = {ORIGIN_A: [], ORIGIN_B: []}
    for idx in order:
        origin = graph.origins[idx]
        if len(chosen[origin]) < quota[origin]:
            chosen[origin].append(idx)

    selected_a = tuple(graph.sentences[i] for i in sorted(chosen[ORIGIN_A]))
    selected_b = tuple(graph.sentences[i] for i in sorted(chosen[ORIGIN_B]))
    return FilteredPair(selected_a=selected_a, selected_b=selected_b,
                        scores=scores)


def filter_pair(doc_a: Document, doc_b: Document, lam: int = DEFAULT_LAMBDA,
                params: PageRankParams | None = None) -> FilteredPair:
    """Build the united graph and select the top sentences in one step."""
    return select_top_sentences(build_sentence_graph(doc_a, doc_b), lam, params)


def filter_pair_per_document(doc_a: Document, doc_b: Document,
                             lam: int = DEFAULT_LAMBDA,
                             params: PageRankParams | None = None) -> FilteredPair:
    """Baseline that ranks each document's own graph in isolation.

    Cross-document links are ignored, so shared matching signal cannot
    influence the selection; kept only for ablation comparisons.
    """
    pair_a = select_top_sentences(build_sentence_graph(doc_a, doc_a), lam, params)
    pair_b = select_top_sentences(build_sentence_graph(doc_b, doc_b), lam, params)
    return FilteredPair(selected_a=pair_a.selected_a,
                        selected_b=pair_b.selected_b,
                        scores=pair_a.scores)


def assemble_sequence(pair: FilteredPair, vocab: Vocab,
                      max_len: int) -> TokenSequence:
    """[CLS] tokens(A) [SEP] tokens(B) [SEP], truncated evenly to max_len.

    Overflow drops trailing tokens from the currently longer side first
    (ties drop from A). [CLS] and both [SEP] positions are protected.
    """
    if max_len < 4:
        raise SequenceTooShort(
            f"max_len {max_len} cannot hold [CLS], one token and two [SEP]")
    tokens_a = [t for s in pair.selected_a for t in s.tokens]
    tokens_b = [t for s in pair.selected_b for t in s.tokens]

    budget = max_len - 3
    len_a, len_b = len(tokens_a), len(tokens_b)
    while len_a + len_b > budget:
        if len_a >= len_b:
            len_a -= 1
        else:
            len_b -= 1
    tokens_a = tokens_a[:len_a]
    tokens_b = tokens_b[:len_b]

    ids = ([vocab.cls_id] + vocab.encode_tokens(tokens_a) + [vocab.sep_id]
           + vocab.encode_tokens(tokens_b) + [vocab.sep_id])
    protected = np.zeros(len(ids), dtype=bool)
    protected[0] = True
    protected[1 + len_a] = True
    protected[-1] = True
    return TokenSequence(ids=np.array(ids, dtype=np.int64),
                         protected_mask=protected)


def export_sentence_graph(graph: SentenceGraph,
                          scores: PageRankScores) -> dict:
    """JSON-ready graph view: nodes carry document tag, in-document index,
    text and PageRank score; edges list each undirected link once."""
    nodes = [
        {
            "doc": graph.origins[i],
            "index": graph.sentences[i].index_in_doc,
            "text": graph.sentences[i].text,
            "score": float(scores.u[i]),
        }
        for i in range(graph.n)
    ]
    edges = []
    for i in range(graph.n):
        for j in range(i + 1, graph.n):
            w = graph.weights[i, j]
            if w > 0:
                edges.append({"i": i, "j": j, "weight": float(w)})
    return {"nodes": nodes, "edges": edges}

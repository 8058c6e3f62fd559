"""Dataset ingestion: sentence splitting, tokenization, stopword removal and
vocabulary construction.

Everything here is deterministic and immutable after construction, so values
can be shared freely across threads.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyDocument, LabelError, ParseError

# Words are maximal alphanumeric runs; any other non-space character is
# emitted as its own token ("state-of-the-art" -> state - of - the - art).
_WORD_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")

# Candidate sentence boundary: run of terminal punctuation followed by space.
_BOUNDARY_RE = re.compile(r"[.!?]+(?=\s)")

# Token ending at a candidate period, dots included ("e.g.", "u.s.", "dr.").
_ABBREV_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z.]*\.$")

# Single-letter initials ("John A. Smith") never end a sentence.
_INITIAL_RE = re.compile(r"^[a-z]\.$")

DEFAULT_ABBREVIATIONS = frozenset({
    "dr.", "mr.", "mrs.", "ms.", "prof.", "rev.", "gen.", "sen.", "rep.",
    "sr.", "jr.", "st.", "mt.", "capt.", "sgt.", "col.", "gov.",
    "e.g.", "i.e.", "cf.", "etc.", "vs.", "al.", "ca.", "viz.",
    "fig.", "figs.", "eq.", "sec.", "ch.", "pp.", "no.", "nos.",
    "vol.", "dept.", "univ.", "inst.", "approx.", "est.",
    "inc.", "ltd.", "co.", "corp.",
    "u.s.", "u.k.", "u.n.", "ph.d.", "m.d.", "b.a.", "m.a.", "a.m.", "p.m.",
    "jan.", "feb.", "apr.", "jun.", "jul.", "aug.", "sept.", "oct.",
    "nov.", "dec.",
})


@dataclass(frozen=True)
class SplitRules:
    """Rule set for the sentence splitter.

    ``abbreviations`` holds lowercased tokens (trailing period included)
    after which a period never ends a sentence.
    """

    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS


@dataclass(frozen=True)
class Sentence:
    """One sentence of a document.

    ``tokens`` is the full lowercased token sequence; ``content_tokens`` has
    stopwords and punctuation removed and is what similarity scoring sees.
    """

    doc_id: str
    index_in_doc: int
    text: str
    tokens: tuple[str, ...]
    content_tokens: tuple[str, ...]


@dataclass(frozen=True)
class Document:
    id: str
    raw_text: str
    sentences: tuple[Sentence, ...]

    @classmethod
    def from_text(cls, doc_id: str, raw_text: str,
                  rules: SplitRules | None = None,
                  stopwords: frozenset[str] | None = None) -> "Document":
        sentences = split_sentences(raw_text, rules=rules, doc_id=doc_id,
                                    stopwords=stopwords)
        return cls(id=doc_id, raw_text=raw_text, sentences=tuple(sentences))

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class MatchExample:
    """A labeled document pair; label 1 means the pair matches."""

    text_a: Document
    text_b: Document
    label: int

    def __post_init__(self):
        if self.label not in (0, 1) or isinstance(self.label, bool):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


_STOPWORD_CACHE: frozenset[str] | None = None


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Load a stopword file (one lowercase word per line, '#' comments).

    With no path, the list packaged under ``longmatch/data`` is used.
    """
    if path is None:
        text = resources.files("longmatch").joinpath(
            "data/stopwords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


def default_stopwords() -> frozenset[str]:
    global _STOPWORD_CACHE
    if _STOPWORD_CACHE is None:
        _STOPWORD_CACHE = load_stopwords()
    return _STOPWORD_CACHE


def tokenize(sentence_text: str) -> list[str]:
    """Lowercase, punctuation-splitting tokenizer.

    Idempotent on rejoined output: tokenize(" ".join(tokenize(s))) equals
    tokenize(s).
    """
    return _WORD_RE.findall(sentence_text.lower())


def _is_punctuation(token: str) -> bool:
    return not any(c.isalnum() for c in token)


def remove_stopwords(tokens: Iterable[str],
                     stopwords: frozenset[str] | set[str]) -> list[str]:
    """Order-preserving filter; punctuation tokens are dropped as well."""
    return [t for t in tokens if t not in stopwords and not _is_punctuation(t)]


def _abbrev_token_before(text: str, end: int) -> str:
    """Lowercased word ending at position ``end`` (exclusive), dots kept."""
    m = _ABBREV_TOKEN_RE.search(text, 0, end)
    return m.group().lower() if m else ""


def split_sentences(raw_text: str,
                    rules: SplitRules | None = None,
                    doc_id: str = "",
                    stopwords: frozenset[str] | None = None) -> list[Sentence]:
    """Split text at terminal punctuation followed by whitespace.

    Periods after known abbreviations or single-letter initials do not
    split. Raises EmptyDocument when there is no non-whitespace content.
    """
    rules = rules if rules is not None else SplitRules()
    stop = stopwords if stopwords is not None else default_stopwords()
    text = raw_text.strip()
    if not text:
        raise EmptyDocument(f"document {doc_id!r} has no content")

    cuts = []
    for m in _BOUNDARY_RE.finditer(text):
        if m.group() == ".":
            token = _abbrev_token_before(text, m.end())
            if token in rules.abbreviations or _INITIAL_RE.match(token):
                continue
        cuts.append(m.end())

    pieces = []
    prev = 0
    for cut in [*cuts, len(text)]:
        piece = text[prev:cut].strip()
        if piece:
            pieces.append(piece)
        prev = cut

    sentences = []
    for i, piece in enumerate(pieces):
        tokens = tuple(tokenize(piece))
        content = tuple(remove_stopwords(tokens, stop))
        sentences.append(Sentence(doc_id=doc_id, index_in_doc=i, text=piece,
                                  tokens=tokens, content_tokens=content))
    return sentences


def load_dataset(path: str | Path,
                 rules: SplitRules | None = None,
                 stopwords: frozenset[str] | None = None) -> list[MatchExample]:
    """Read a JSON-lines dataset of {text_a, text_b, label} records.

    The whole load fails on the first bad line: ParseError carries the
    1-based line number, LabelError fires for labels outside {0, 1}.
    Documents are sentence-split eagerly.
    """
    path = Path(path)
    examples = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise ParseError(line_no, "record is not a JSON object")
            for key in ("text_a", "text_b", "label"):
                if key not in obj:
                    raise ParseError(line_no, f"missing field {key!r}")
            if not isinstance(obj["text_a"], str) or not isinstance(obj["text_b"], str):
                raise ParseError(line_no, "text_a and text_b must be strings")
            label = obj["label"]
            if isinstance(label, bool) or label not in (0, 1):
                raise LabelError(line_no, label)
            try:
                doc_a = Document.from_text(f"{line_no}a", obj["text_a"],
                                           rules=rules, stopwords=stopwords)
                doc_b = Document.from_text(f"{line_no}b", obj["text_b"],
                                           rules=rules, stopwords=stopwords)
            except EmptyDocument as exc:
                raise ParseError(line_no, str(exc)) from exc
            examples.append(MatchExample(doc_a, doc_b, label))
    return examples


PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)


class Vocab:
    """Bijective token-id mapping with fixed special ids.

    Ids 0..3 are [PAD], [UNK], [CLS], [SEP]; regular tokens follow in the
    order given. Unknown tokens encode to the UNK id.
    """

    def __init__(self, tokens: Sequence[str]):
        id_to_token = list(SPECIAL_TOKENS)
        for tok in tokens:
            if tok in SPECIAL_TOKENS:
                raise ValueError(f"{tok!r} is reserved")
            id_to_token.append(tok)
        token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
        if len(token_to_id) != len(id_to_token):
            raise ValueError("duplicate tokens in vocabulary")
        self.id_to_token: list[str] = id_to_token
        self.token_to_id: dict[str, int] = token_to_id

    pad_id = 0
    unk_id = 1
    cls_id = 2
    sep_id = 3

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def encode_tokens(self, tokens: Iterable[str]) -> list[int]:
        return [self.encode(t) for t in tokens]

    def token(self, token_id: int) -> str:
        return self.id_to_token[token_id]

    def regular_tokens(self) -> list[str]:
        return self.id_to_token[len(SPECIAL_TOKENS):]


def build_vocab(examples: Sequence[MatchExample], min_freq: int = 1) -> Vocab:
    """Vocabulary of tokens with corpus frequency >= min_freq.

    Order is by descending frequency, then alphabetically, so ids are
    stable across runs.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter()
    for ex in examples:
        for doc in (ex.text_a, ex.text_b):
            for sent in doc.sentences:
                counts.update(sent.tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_freq),
                  key=lambda t: (-counts[t], t))
    return Vocab(kept)

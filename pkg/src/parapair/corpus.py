"""Corpus ingestion, tokenization, vocabularies and padded id batches.

QQP-style pair files are tab separated with the header
``id qid1 qid2 question1 question2 is_duplicate``; SST-style phrase files are
``phrase_id phrase sentiment`` with sentiment in 0..4.
"""

from __future__ import annotations

import csv
import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError, SizeError

log = logging.getLogger(__name__)

PAD, START, STOP, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<start>", "<stop>", "<unk>")

PAIR_HEADER = ("id", "qid1", "qid2", "question1", "question2", "is_duplicate")
PHRASE_HEADER = ("phrase_id", "phrase", "sentiment")
SENTIMENT_LABELS = ("Very Negative", "Negative", "Neutral", "Positive", "Very Positive")


@dataclass(frozen=True)
class QuestionPair:
    id: int
    qid1: int
    qid2: int
    question1: str
    question2: str
    is_duplicate: int

    @property
    def source(self):
        return self.question1

    @property
    def target(self):
        return self.question2


@dataclass(frozen=True)
class PhraseExample:
    phrase_id: int
    phrase: str
    sentiment: int


class Records(list):
    """A list of parsed records that also remembers how many rows were skipped."""

    def __init__(self, items=(), skipped=0):
        super().__init__(items)
        self.skipped = skipped


def _normalize(text):
    return " ".join(text.split())


def _open_tsv(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    # newline="" lets csv handle CRLF
    return path.open("r", encoding="utf-8", newline="")


def ingest_pairs(path, keep_only_duplicates=False) -> Records:
    """Parse a QQP TSV file into :class:`QuestionPair` records.

    Malformed rows (wrong column count, non-integer ids, empty questions,
    labels outside {0, 1}) are skipped and counted in ``result.skipped``.
    """
    with _open_tsv(path) as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PAIR_HEADER:
            raise FormatError(f"{path}: expected header {' '.join(PAIR_HEADER)!r}, got {header!r}")
        out = Records()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != 6:
                    raise ValueError(f"{len(row)} columns")
                rid, q1id, q2id = (int(c) for c in row[:3])
                label = int(row[5])
                if label not in (0, 1):
                    raise ValueError(f"is_duplicate={label}")
                q1, q2 = _normalize(row[3]), _normalize(row[4])
                if not q1 or not q2:
                    raise ValueError("empty question")
            except ValueError as exc:
                out.skipped += 1
                log.warning("%s:%d: skipping malformed row (%s)", path, lineno, exc)
                continue
            if keep_only_duplicates and label != 1:
                continue
            out.append(QuestionPair(rid, q1id, q2id, q1, q2, label))
    if out.skipped:
        log.warning("%s: %d malformed rows skipped", path, out.skipped)
    return out


def write_pairs(pairs, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(PAIR_HEADER) + "\n")
        for p in pairs:
            fh.write(f"{p.id}\t{p.qid1}\t{p.qid2}\t{p.question1}\t{p.question2}\t{p.is_duplicate}\n")


def ingest_phrases(path) -> Records:
    """Parse an SST-style phrase file; the header row is optional."""
    with _open_tsv(path) as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        out = Records()
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and tuple(c.strip() for c in row) == PHRASE_HEADER:
                continue
            try:
                if len(row) != 3:
                    raise ValueError(f"{len(row)} columns")
                pid, label = int(row[0]), int(row[2])
                if not 0 <= label <= 4:
                    raise ValueError(f"sentiment={label}")
                phrase = _normalize(row[1])
                if not phrase:
                    raise ValueError("empty phrase")
            except ValueError as exc:
                out.skipped += 1
                log.warning("%s:%d: skipping malformed row (%s)", path, lineno, exc)
                continue
            out.append(PhraseExample(pid, phrase, label))
    return out


def write_phrases(examples, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(PHRASE_HEADER) + "\n")
        for ex in examples:
            fh.write(f"{ex.phrase_id}\t{ex.phrase}\t{ex.sentiment}\n")


def split(pairs, sizes, seed=0):
    """Disjoint seeded-shuffle split into (train, val, test) of exact sizes.

    ``sizes`` is a ``(train, val, test)`` tuple or a dict with those keys.
    """
    if isinstance(sizes, dict):
        sizes = (sizes["train"], sizes["val"], sizes["test"])
    n_train, n_val, n_test = (int(s) for s in sizes)
    need = n_train + n_val + n_test
    if min(n_train, n_val, n_test) < 0:
        raise SizeError(f"negative split size in {sizes}")
    if need > len(pairs):
        raise SizeError(f"split needs {need} items but only {len(pairs)} available "
                        f"(short by {need - len(pairs)})")
    order = np.random.default_rng(seed).permutation(len(pairs))
    items = [pairs[i] for i in order]
    return (items[:n_train], items[n_train:n_train + n_val],
            items[n_train + n_val:need])


_PUNCT = re.compile(r"""([.,?!'"])""")


def tokenize(text):
    """Lowercase, split on whitespace, and split off ``. , ? ! ' "`` as tokens."""
    return _PUNCT.sub(r" \1 ", text.lower()).split()


class Vocabulary:
    """Token <-> id map; ids 0..3 are PAD, START, STOP, UNK."""

    def __init__(self, tokens=()):
        self.id_to_token = list(SPECIALS)
        self.token_to_id = {t: i for i, t in enumerate(SPECIALS)}
        for tok in tokens:
            if tok in self.token_to_id:
                raise ValueError(f"duplicate token {tok!r}")
            self.token_to_id[tok] = len(self.id_to_token)
            self.id_to_token.append(tok)

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def encode(self, tokens):
        get = self.token_to_id.get
        return [get(t, UNK) for t in tokens]

    def decode(self, ids, strip_specials=True):
        out = []
        for i in ids:
            i = int(i)
            if strip_specials:
                if i == STOP:
                    break
                if i in (PAD, START):
                    continue
            out.append(self.id_to_token[i])
        return out

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.id_to_token:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh]
        if tuple(lines[:4]) != SPECIALS:
            raise FormatError(f"{path}: first four lines must be {SPECIALS}")
        return cls(lines[4:])


def build_vocab(token_lists, min_freq=1, max_size=None) -> Vocabulary:
    """Vocabulary of tokens seen at least ``min_freq`` times.

    Most frequent first, ties broken lexicographically.  ``max_size`` caps the
    total size including the four specials.
    """
    if min_freq < 1:
        raise ContractError("min_freq must be >= 1")
    counts = Counter()
    for toks in token_lists:
        counts.update(toks)
    kept = sorted((t for t, c in counts.items() if c >= min_freq and t not in SPECIALS),
                  key=lambda t: (-counts[t], t))
    if max_size is not None:
        kept = kept[:max(0, max_size - len(SPECIALS))]
    return Vocabulary(kept)


@dataclass
class TokenSeq:
    ids: np.ndarray
    length: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.length > len(self.ids) or np.any(self.ids[self.length:] != PAD):
            raise ContractError("TokenSeq positions past length must be PAD")


def frame(tokens, vocab, max_len) -> TokenSeq:
    """``START tokens STOP`` then PAD up to ``max_len``; content capped at max_len - 2."""
    if max_len < 2:
        raise ContractError("max_len must be >= 2")
    ids = [START] + vocab.encode(tokens[:max_len - 2]) + [STOP]
    arr = np.zeros(max_len, dtype=np.int64)
    arr[:len(ids)] = ids
    return TokenSeq(arr, len(ids))


@dataclass
class Batch:
    sources: np.ndarray
    targets: np.ndarray
    source_lengths: np.ndarray
    target_lengths: np.ndarray

    @property
    def size(self):
        return self.sources.shape[0]

    @property
    def lengths(self):
        return self.target_lengths

    def rows(self, idx):
        idx = np.asarray(idx)
        s_len = self.source_lengths[idx]
        t_len = self.target_lengths[idx]
        return Batch(self.sources[idx][:, :max(s_len.max(), 1)],
                     self.targets[idx][:, :max(t_len.max(), 2)], s_len, t_len)

    def target_mask(self):
        """Mask over predicted positions 1..len-1 (shape N x (max_len - 1))."""
        steps = np.arange(self.targets.shape[1] - 1)
        return (steps[None, :] < (self.target_lengths[:, None] - 1)).astype(np.float64)


def _texts(item):
    if isinstance(item, QuestionPair):
        return item.question1, item.question2
    src, tgt = item
    return src, tgt


def encode_batch(pairs, vocab, max_len) -> Batch:
    """Frame and pad (source, target) pairs; OOV tokens map to UNK."""
    if max_len < 2:
        raise ContractError("max_len must be >= 2")
    n = len(pairs)
    sources = np.zeros((n, max_len), dtype=np.int64)
    targets = np.zeros((n, max_len), dtype=np.int64)
    s_len = np.zeros(n, dtype=np.int64)
    t_len = np.zeros(n, dtype=np.int64)
    for i, item in enumerate(pairs):
        src, tgt = _texts(item)
        s = frame(tokenize(src) if isinstance(src, str) else list(src), vocab, max_len)
        t = frame(tokenize(tgt) if isinstance(tgt, str) else list(tgt), vocab, max_len)
        sources[i], s_len[i] = s.ids, s.length
        targets[i], t_len[i] = t.ids, t.length
    return Batch(sources, targets, s_len, t_len)


def pair_texts(pairs):
    return [_texts(p) for p in pairs]

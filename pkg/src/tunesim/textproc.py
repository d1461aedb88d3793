"""Text documents, serialization, and the whitespace-token vocabulary."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

PAD_ID = 0
UNK_ID = 1
BOS_ID = 2
RESERVED_TOKENS = ("<pad>", "<unk>", "<bos>")


@dataclass(frozen=True)
class TextDocument:
    title: str = ""
    artists: tuple[str, ...] = ()
    lyrics: str = ""


def serialize_document(doc: TextDocument) -> str:
    artists = ", ".join(doc.artists)
    return f"title: {doc.title} | artists: {artists} | lyrics: {doc.lyrics}"


def tokenize(text: str) -> list[str]:
    return text.lower().split()


@dataclass
class Vocab:
    id_to_token: list[str]
    token_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise DataError("vocabulary contains duplicate tokens")
        for i, tok in enumerate(RESERVED_TOKENS):
            if self.id_to_token[: len(RESERVED_TOKENS)][i] != tok:
                raise DataError("vocabulary must start with the reserved "
                                f"tokens {RESERVED_TOKENS}")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode_tokens(self, tokens: list[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]


def build_vocab(serialized_texts, max_size: int) -> Vocab:
    """Frequency vocabulary over whitespace tokens.

    Most frequent first, ties broken lexicographically; reserved pad/unk/bos
    tokens occupy ids 0..2 and count toward max_size.
    """
    if max_size < len(RESERVED_TOKENS) + 1:
        raise DataError("vocabulary size leaves no room for real tokens")
    counts = Counter()
    for text in serialized_texts:
        counts.update(tokenize(text))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [tok for tok, _ in ranked[: max_size - len(RESERVED_TOKENS)]]
    return Vocab(list(RESERVED_TOKENS) + keep)


def encode_document(doc: TextDocument, vocab: Vocab,
                    max_len: int) -> np.ndarray:
    """Token ids for one document: BOS followed by serialized-text tokens,
    truncated to max_len (BOS included)."""
    ids = [BOS_ID] + vocab.encode_tokens(tokenize(serialize_document(doc)))
    return np.asarray(ids[:max_len], dtype=np.int64)


def save_vocab(path, vocab: Vocab) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, tok in enumerate(vocab.id_to_token):
            fh.write(f"{tok}\t{i}\n")


def load_vocab(path) -> Vocab:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read vocabulary {path}: {exc}")
    entries = {}
    for ln, line in enumerate(lines, 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{ln}: expected token<TAB>id")
        try:
            entries[int(parts[1])] = parts[0]
        except ValueError:
            raise DataError(f"{path}:{ln}: id is not an integer")
    if sorted(entries) != list(range(len(entries))):
        raise DataError(f"vocabulary {path} ids are not contiguous from 0")
    return Vocab([entries[i] for i in range(len(entries))])

"""Character-level text handling: de-spacing, boundary labels, Hangul Jamo,
vocabularies, and corpus ingestion.

A sentence is represented as a whitespace-free character sequence plus a
binary boundary vector: ``labels[i] == 1`` means a space follows character
``i``.  A sequence of L characters has exactly ``max(L - 1, 0)`` labels.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

PAD_ID = 0
UNK_ID = 1

HANGUL_FIRST = 0xAC00
HANGUL_LAST = 0xD7A3
LEAD_COUNT = 19
VOWEL_COUNT = 21
TRAIL_COUNT = 28  # index 0 means "no trailing consonant"


class CorpusError(Exception):
    """A corpus file could not be ingested (unreadable, bad encoding, ...)."""


@dataclass(frozen=True)
class CharSequence:
    """A whitespace-free run of Unicode characters."""

    text: str

    def __post_init__(self) -> None:
        if any(ch.isspace() for ch in self.text):
            raise ValueError("CharSequence must not contain whitespace")

    def __len__(self) -> int:
        return len(self.text)

    def __iter__(self) -> Iterator[str]:
        return iter(self.text)

    def __getitem__(self, index) -> str:
        return self.text[index]


@dataclass(frozen=True)
class BoundaryLabels:
    """Binary space-after-character flags for the gaps of a CharSequence."""

    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(v not in (0, 1) for v in self.labels):
            raise ValueError("boundary labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[int]:
        return iter(self.labels)

    def __getitem__(self, index) -> int:
        return self.labels[index]


@dataclass(frozen=True)
class JamoDecomposition:
    """Lead/vowel/trail indices of one Hangul syllable block (CV(C))."""

    lead: int
    vowel: int
    trail: Optional[int] = None  # absent, or 1..27

    def __post_init__(self) -> None:
        if not 0 <= self.lead < LEAD_COUNT:
            raise ValueError(f"lead index {self.lead} out of range")
        if not 0 <= self.vowel < VOWEL_COUNT:
            raise ValueError(f"vowel index {self.vowel} out of range")
        if self.trail is not None and not 1 <= self.trail < TRAIL_COUNT:
            raise ValueError(f"trail index {self.trail} out of range")


def despace(text: str) -> tuple[CharSequence, BoundaryLabels]:
    """Strip all whitespace from ``text`` and remember where it was.

    The input is NFC-normalized first.  Runs of whitespace count as a single
    boundary and leading/trailing whitespace is dropped, so the labels are a
    pure "space follows character i" vector.
    """
    normalized = unicodedata.normalize("NFC", text)
    tokens = normalized.split()
    chars = "".join(tokens)
    labels = [0] * max(len(chars) - 1, 0)
    pos = 0
    for token in tokens[:-1]:
        pos += len(token)
        labels[pos - 1] = 1
    return CharSequence(chars), BoundaryLabels(tuple(labels))


def apply_labels(chars: CharSequence, labels: BoundaryLabels) -> str:
    """Render ``chars`` with a single ASCII space after each flagged gap.

    Inverse of :func:`despace`; raises ``ValueError`` when the label vector
    does not have exactly ``max(L - 1, 0)`` entries.
    """
    expected = max(len(chars) - 1, 0)
    if len(labels) != expected:
        raise ValueError(
            f"label vector has {len(labels)} entries, expected {expected} "
            f"for {len(chars)} characters"
        )
    if not chars.text:
        return ""
    parts = []
    for i, ch in enumerate(chars.text[:-1]):
        parts.append(ch)
        if labels[i]:
            parts.append(" ")
    parts.append(chars.text[-1])
    return "".join(parts)


def decompose_jamo(syllable: str) -> Optional[JamoDecomposition]:
    """Arithmetic Jamo decomposition of one character, or None outside
    U+AC00..U+D7A3."""
    if len(syllable) != 1:
        raise ValueError("decompose_jamo expects a single character")
    cp = ord(syllable)
    if not HANGUL_FIRST <= cp <= HANGUL_LAST:
        return None
    offset = cp - HANGUL_FIRST
    lead = offset // (VOWEL_COUNT * TRAIL_COUNT)
    vowel = (offset % (VOWEL_COUNT * TRAIL_COUNT)) // TRAIL_COUNT
    trail = offset % TRAIL_COUNT
    return JamoDecomposition(lead, vowel, trail if trail else None)


def compose_jamo(decomposition: JamoDecomposition) -> str:
    """Recompose a syllable from its Jamo indices."""
    cp = (
        HANGUL_FIRST
        + decomposition.lead * VOWEL_COUNT * TRAIL_COUNT
        + decomposition.vowel * TRAIL_COUNT
        + (decomposition.trail or 0)
    )
    return chr(cp)


@dataclass(frozen=True)
class Vocabulary:
    """Character inventory with reserved PAD/UNK ids and per-char counts.

    Non-special characters get ids >= 2, assigned deterministically by
    (frequency desc, code point asc).
    """

    char_to_id: dict[str, int] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = sorted(self.char_to_id.values())
        if len(set(ids)) != len(ids):
            raise ValueError("vocabulary ids must be unique")
        if any(i < 2 for i in ids):
            raise ValueError("ids 0 and 1 are reserved for PAD/UNK")
        if set(self.char_to_id) != set(self.counts):
            raise ValueError("char_to_id and counts must cover the same characters")

    def __len__(self) -> int:
        """Total id count, specials included."""
        return len(self.char_to_id) + 2

    def __contains__(self, char: str) -> bool:
        return char in self.char_to_id

    def id_for(self, char: str) -> int:
        return self.char_to_id.get(char, UNK_ID)

    def chars(self) -> list[str]:
        """Characters in id order."""
        return sorted(self.char_to_id, key=self.char_to_id.__getitem__)


def build_vocabulary(lines: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Count de-spaced characters over ``lines`` and keep those seen at least
    ``min_count`` times."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    for line in lines:
        chars, _ = despace(line)
        for ch in chars:
            counts[ch] = counts.get(ch, 0) + 1
    kept = {ch: n for ch, n in counts.items() if n >= min_count}
    ordered = sorted(kept, key=lambda ch: (-kept[ch], ord(ch)))
    char_to_id = {ch: i + 2 for i, ch in enumerate(ordered)}
    return Vocabulary(char_to_id=char_to_id, counts=kept)


def save_vocabulary(vocab: Vocabulary, path: str) -> None:
    """Write "<size>" then one "<char>\\t<id>\\t<count>" line per character."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(vocab.char_to_id)}\n")
        for ch in vocab.chars():
            fh.write(f"{ch}\t{vocab.char_to_id[ch]}\t{vocab.counts[ch]}\n")


def load_vocabulary(path: str) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        try:
            size = int(header)
        except ValueError:
            raise CorpusError(f"{path}:1: bad vocabulary header {header!r}") from None
        char_to_id: dict[str, int] = {}
        counts: dict[str, int] = {}
        for lineno in range(2, size + 2):
            line = fh.readline()
            if not line:
                raise CorpusError(f"{path}:{lineno}: truncated vocabulary file")
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 3 tab-separated fields")
            ch, id_str, count_str = fields
            char_to_id[ch] = int(id_str)
            counts[ch] = int(count_str)
    return Vocabulary(char_to_id=char_to_id, counts=counts)


class CorpusReader:
    """Streams (CharSequence, BoundaryLabels) pairs from a text corpus.

    One sentence per line, UTF-8, LF or CRLF, spaces marking segmentation.
    Blank lines are ignored.  Lines whose de-spaced length exceeds
    ``max_chars`` are skipped and counted in ``skipped_long``.
    """

    def __init__(self, path: str, max_chars: Optional[int] = None):
        self.path = path
        self.max_chars = max_chars
        self.skipped_long = 0
        self.yielded = 0

    def __iter__(self) -> Iterator[tuple[CharSequence, BoundaryLabels]]:
        self.skipped_long = 0
        self.yielded = 0
        try:
            fh = open(self.path, "rb")
        except OSError as exc:
            raise CorpusError(f"cannot open corpus {self.path}: {exc}") from exc
        with fh:
            for lineno, raw in enumerate(fh, start=1):
                try:
                    line = raw.decode("utf-8")
                except UnicodeDecodeError as exc:
                    raise CorpusError(
                        f"{self.path}:{lineno}: invalid UTF-8 ({exc.reason})"
                    ) from exc
                chars, labels = despace(line)
                if not len(chars):
                    continue
                if self.max_chars is not None and len(chars) > self.max_chars:
                    self.skipped_long += 1
                    continue
                self.yielded += 1
                yield chars, labels


def load_corpus(path: str, max_chars: Optional[int] = None) -> CorpusReader:
    """Open a corpus for (re-)iteration; see :class:`CorpusReader`."""
    return CorpusReader(path, max_chars=max_chars)

"""Corpus loading, heuristic event-triple extraction and the events JSONL format."""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence


class Category(str, Enum):
    ENTITY = "ENTITY"
    PREDICATE = "PREDICATE"
    ARGUMENT = "ARGUMENT"

    @property
    def rank(self) -> int:
        return _CATEGORY_RANK[self]


_CATEGORY_RANK = {Category.ENTITY: 0, Category.PREDICATE: 1, Category.ARGUMENT: 2}
CATEGORIES = tuple(Category)


class CorpusFormatError(ValueError):
    pass


class EventFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple[tuple[str, ...], ...]
    label: str | None = None


@dataclass(frozen=True)
class EventElement:
    """One slot of an event block. ``surface`` is None when the slot is absent."""

    surface: str | None
    category: Category

    @property
    def absent(self) -> bool:
        return self.surface is None


@dataclass(frozen=True)
class EventBlock:
    doc_id: str
    sentence_index: int
    elements: tuple[EventElement, EventElement, EventElement]

    def __post_init__(self) -> None:
        if len(self.elements) != 3:
            raise EventFormatError("elements must have length 3")
        if self.sentence_index < 0:
            raise EventFormatError("sentence_index must be non-negative")
        if self.elements[1].absent or not self.elements[1].surface:
            raise EventFormatError("predicate element must be non-empty")

    @property
    def subject(self) -> EventElement:
        return self.elements[0]

    @property
    def predicate(self) -> EventElement:
        return self.elements[1]

    @property
    def object(self) -> EventElement:
        return self.elements[2]


@dataclass
class Corpus:
    documents: list[Document] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def labels(self) -> dict[str, str | None]:
        return {d.doc_id: d.label for d in self.documents}


# ---------------------------------------------------------------------------
# corpus loading

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?;])\s+|[.!?;]+$")
_TOKEN = re.compile(r"[A-Za-z0-9][A-Za-z0-9'\-]*")


def tokenize(text: str) -> tuple[tuple[str, ...], ...]:
    """Split raw text into sentences of word tokens. Case is preserved."""
    sentences = []
    for chunk in _SENTENCE_SPLIT.split(text):
        if not chunk:
            continue
        toks = tuple(_TOKEN.findall(chunk))
        if toks:
            sentences.append(toks)
    return tuple(sentences)


def _lines(text: str) -> list[str]:
    # str.splitlines also breaks on U+0085/U+2028, which may occur inside JSON strings
    return [ln.rstrip("\r") for ln in text.split("\n")]


def load_corpus(path: str | Path, format: str = "plain-lines") -> Corpus:
    """Read a corpus file.

    ``plain-lines``: one document per line, doc id = 1-based line number.
    ``labeled-tsv``: ``label<TAB>text`` or ``doc_id<TAB>label<TAB>text``.
    Blank lines are skipped without shifting the ids of later lines.
    """
    if format not in ("plain-lines", "labeled-tsv"):
        raise ValueError(f"unknown corpus format {format!r}")
    path = Path(path)
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusFormatError(f"{path}: not valid UTF-8 ({exc})") from exc

    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, line in enumerate(_lines(text), start=1):
        if not line.strip():
            continue
        doc_id, label, body = str(lineno), None, line
        if format == "labeled-tsv":
            parts = line.split("\t")
            if len(parts) == 2:
                label, body = parts
            elif len(parts) == 3:
                doc_id, label, body = parts
            else:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected 'label<TAB>text' or 'id<TAB>label<TAB>text', "
                    f"got {len(parts)} field(s)"
                )
            label = label.strip()
            doc_id = doc_id.strip()
            if not label:
                raise CorpusFormatError(f"{path}:{lineno}: empty label")
        sentences = tokenize(body)
        if not sentences:
            raise CorpusFormatError(f"{path}:{lineno}: document has no tokens")
        if doc_id in seen:
            raise CorpusFormatError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        docs.append(Document(doc_id=doc_id, sentences=sentences, label=label))
    if not docs:
        raise CorpusFormatError(f"{path}: empty corpus")
    return Corpus(docs)


def filter_vocabulary(
    corpus: Corpus, stopwords: Iterable[str] = (), min_count: int = 1
) -> Corpus:
    """Drop stopwords and words seen fewer than ``min_count`` times corpus-wide.

    Comparison is case-insensitive; surviving tokens keep their case.
    Sentences emptied by filtering are kept as empty so sentence indices stay valid.
    """
    stop = {w.lower() for w in stopwords}
    counts = Counter(t.lower() for d in corpus for s in d.sentences for t in s)

    def keep(tok: str) -> bool:
        low = tok.lower()
        return low not in stop and counts[low] >= min_count

    docs = [
        Document(
            doc_id=d.doc_id,
            label=d.label,
            sentences=tuple(tuple(t for t in s if keep(t)) for s in d.sentences),
        )
        for d in corpus
    ]
    return Corpus(docs)


def load_wordlist(path: str | Path) -> set[str]:
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return words


# ---------------------------------------------------------------------------
# heuristic SVO extraction

# Small closed list of common English verbs and their inflections.
_VERB_STEMS = (
    "be is are was were been am has have had do does did make makes made "
    "go goes went gone take takes took taken get gets got see sees saw seen "
    "eat eats ate eaten drink drinks drank sit sits sat run runs ran "
    "say says said give gives gave given find finds found buy buys bought "
    "sell sells sold win wins won lose loses lost lead leads led meet meets met "
    "build builds built hold holds held write writes wrote written read reads "
    "tell tells told know knows knew known think thinks thought bring brings brought "
    "begin begins began keep keeps kept leave leaves left pay pays paid send sends sent "
    "call calls visit visits help helps play plays beat beats hit hits cut cuts "
    "join joins sign signs plan plans want wants need needs like likes love loves "
    "use uses open opens close closes start starts launch launches report reports "
    "announce announces acquire acquires attack attacks support supports score scores "
    "raise raises reach reaches hire hires fire fires elect elects praise praises "
    "criticize criticizes criticise criticises defeat defeats chase chases "
    "teach teaches taught catch catches caught fight fights fought"
).split()
VERB_LEXICON = frozenset(_VERB_STEMS)
_VERB_SUFFIXES = ("ed", "ing", "izes", "ized", "ises", "ised", "ifies", "ified")

DEFAULT_STOPWORDS = frozenset(
    "a an the of on in at to for from by with and or but not no this that these those "
    "it its he she they we you i his her their our my your him them us me as into "
    "onto over under about than then there here".split()
)


def is_verb_like(token: str) -> bool:
    low = token.lower()
    if low in VERB_LEXICON:
        return True
    return len(low) > 4 and low.endswith(_VERB_SUFFIXES)


def _category(token: str, entities: frozenset[str] | set[str]) -> Category:
    if token[:1].isupper() or token.lower() in entities:
        return Category.ENTITY
    return Category.ARGUMENT


def extract_events_heuristic(
    doc: Document,
    stopwords: Iterable[str] = DEFAULT_STOPWORDS,
    entities: Iterable[str] = (),
) -> list[EventBlock]:
    """Emit at most one (subject, predicate, object) block per verb-like token.

    Subject is the nearest noun-like token between the previous block's object and
    the verb, falling back to the previous block's subject (coordinated verbs share
    a subject). Object is the first noun-like token after the verb and before the
    next verb. Missing slots are absent.
    """
    stop = {w.lower() for w in stopwords}
    lex = {w.lower() for w in entities}
    blocks: list[EventBlock] = []
    absent = EventElement(None, Category.ARGUMENT)

    for s_idx, sentence in enumerate(doc.sentences):
        toks = [t for t in sentence if t.lower() not in stop]
        verbs = [i for i, t in enumerate(toks) if is_verb_like(t)]
        prev_subject: EventElement | None = None
        left = 0
        for n, vi in enumerate(verbs):
            right = verbs[n + 1] if n + 1 < len(verbs) else len(toks)
            if vi > left:
                subj = EventElement(toks[vi - 1].lower(), _category(toks[vi - 1], lex))
            else:
                subj = prev_subject or absent
            if vi + 1 < right:
                obj = EventElement(toks[vi + 1].lower(), _category(toks[vi + 1], lex))
                obj_pos = vi + 1
            else:
                obj, obj_pos = absent, vi
            pred = EventElement(toks[vi].lower(), Category.PREDICATE)
            blocks.append(EventBlock(doc.doc_id, s_idx, (subj, pred, obj)))
            prev_subject = subj if not subj.absent else prev_subject
            left = obj_pos + 1
    return blocks


def validate_blocks(blocks: Sequence[EventBlock], corpus: Corpus) -> None:
    """Check doc ids exist and sentence indices are in range."""
    docs = {d.doc_id: d for d in corpus}
    for b in blocks:
        if b.doc_id not in docs:
            raise EventFormatError(f"block references unknown doc_id {b.doc_id!r}")
        if b.sentence_index >= len(docs[b.doc_id].sentences):
            raise EventFormatError(
                f"doc {b.doc_id!r}: sentence_index {b.sentence_index} out of range"
            )


# ---------------------------------------------------------------------------
# events JSONL


def block_to_json(block: EventBlock) -> dict:
    return {
        "doc_id": block.doc_id,
        "sentence_index": block.sentence_index,
        "elements": [
            {"surface": e.surface, "category": e.category.value} for e in block.elements
        ],
    }


def _parse_block(obj: object, where: str) -> EventBlock:
    if not isinstance(obj, dict):
        raise EventFormatError(f"{where}: expected a JSON object")
    for key in ("doc_id", "sentence_index", "elements"):
        if key not in obj:
            raise EventFormatError(f"{where}: missing field {key!r}")
    doc_id = obj["doc_id"]
    if not isinstance(doc_id, str) or not doc_id:
        raise EventFormatError(f"{where}: field 'doc_id' must be a non-empty string")
    s_idx = obj["sentence_index"]
    if isinstance(s_idx, bool) or not isinstance(s_idx, int) or s_idx < 0:
        raise EventFormatError(f"{where}: field 'sentence_index' must be a non-negative integer")
    elems = obj["elements"]
    if not isinstance(elems, list) or len(elems) != 3:
        raise EventFormatError(f"{where}: field 'elements': elements must have length 3")
    parsed = []
    allowed = ", ".join(c.value for c in Category)
    for k, el in enumerate(elems):
        if not isinstance(el, dict) or "surface" not in el or "category" not in el:
            raise EventFormatError(
                f"{where}: field 'elements[{k}]' needs 'surface' and 'category'"
            )
        try:
            cat = Category(el["category"])
        except ValueError:
            raise EventFormatError(
                f"{where}: field 'elements[{k}].category': unknown category "
                f"{el['category']!r} (allowed: {allowed})"
            ) from None
        surface = el["surface"]
        if surface is not None and (not isinstance(surface, str) or not surface):
            raise EventFormatError(
                f"{where}: field 'elements[{k}].surface' must be a non-empty string or null"
            )
        parsed.append(EventElement(surface, cat))
    if parsed[1].absent:
        raise EventFormatError(f"{where}: field 'elements[1]': predicate must not be absent")
    return EventBlock(doc_id, s_idx, tuple(parsed))  # type: ignore[arg-type]


def load_events(path: str | Path) -> list[EventBlock]:
    path = Path(path)
    blocks = []
    for lineno, line in enumerate(_lines(path.read_text(encoding="utf-8")), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EventFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        blocks.append(_parse_block(obj, f"{path}:{lineno}"))
    return blocks


def save_events(blocks: Iterable[EventBlock], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for b in blocks:
            fh.write(json.dumps(block_to_json(b), ensure_ascii=False))
            fh.write("\n")


def group_by_doc(blocks: Iterable[EventBlock]) -> dict[str, list[EventBlock]]:
    """Blocks grouped per document, preserving first-seen document order."""
    out: dict[str, list[EventBlock]] = {}
    for b in blocks:
        out.setdefault(b.doc_id, []).append(b)
    return out

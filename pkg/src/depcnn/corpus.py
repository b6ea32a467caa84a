"""Pre-parsed corpus ingestion, candidate-pair generation, and CV fold plans.

The corpus interchange format is a UTF-8 TSV with one token per line:

    doc_id  sent_id  token_idx  surface  pos  chunk  entity_role  head_idx  dep_label

``head_idx`` is a 0-based index into the sentence or the literal ``ROOT``;
a blank line separates sentences.  Candidate-pair files carry one instance
per line:

    instance_id  doc_id  sent_id  prot1_start  prot1_end  prot2_start  prot2_end  label [difficult]

where the span columns are inclusive token indices, ``label`` is ``PPI`` or
``OTHER`` and the optional ``difficult`` column is ``0`` or ``1``.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, replace

ROLE_PROT1 = "PROT1"
ROLE_PROT2 = "PROT2"
ROLE_PROT = "PROT"
ROLE_NONE = "O"
ROLES = (ROLE_PROT1, ROLE_PROT2, ROLE_PROT, ROLE_NONE)
PROTEIN_ROLES = frozenset((ROLE_PROT1, ROLE_PROT2, ROLE_PROT))

LABEL_PPI = "PPI"
LABEL_OTHER = "OTHER"
LABELS = (LABEL_PPI, LABEL_OTHER)

ROOT_MARKER = "ROOT"


class CorpusError(Exception):
    """Base class for corpus ingestion failures."""


class CorpusParseError(CorpusError):
    """A malformed line; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class CorpusStructureError(CorpusError):
    """A sentence or instance that violates a structural invariant."""


class ConfigError(Exception):
    """An invalid run configuration (bad fold count, empty split, ...)."""


@dataclass(frozen=True)
class AnnotatedToken:
    """One token with its surface form and the five annotation fields."""

    surface: str
    pos: str
    chunk: str
    entity_role: str
    head: int | None  # None marks the sentence root
    dep_label: str


@dataclass(frozen=True)
class AnnotatedSentence:
    tokens: tuple[AnnotatedToken, ...]
    doc_id: str
    sent_id: str

    def __post_init__(self):
        n = len(self.tokens)
        roots = 0
        for i, tok in enumerate(self.tokens):
            if tok.head is None:
                roots += 1
                if tok.dep_label != ROOT_MARKER:
                    raise CorpusStructureError(
                        f"sentence {self.doc_id}/{self.sent_id}: token {i} has no "
                        f"head but dependency label {tok.dep_label!r}"
                    )
            else:
                if not 0 <= tok.head < n:
                    raise CorpusStructureError(
                        f"sentence {self.doc_id}/{self.sent_id}: token {i} has "
                        f"head {tok.head} outside 0..{n - 1}"
                    )
                if tok.head == i:
                    raise CorpusStructureError(
                        f"sentence {self.doc_id}/{self.sent_id}: token {i} is its own head"
                    )
                if tok.dep_label == ROOT_MARKER:
                    raise CorpusStructureError(
                        f"sentence {self.doc_id}/{self.sent_id}: token {i} carries the "
                        f"{ROOT_MARKER} label but has head {tok.head}"
                    )
        if n and roots == 0:
            raise CorpusStructureError(
                f"sentence {self.doc_id}/{self.sent_id}: no root token"
            )

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def key(self) -> tuple[str, str]:
        return (self.doc_id, self.sent_id)


@dataclass(frozen=True)
class PpiInstance:
    """One candidate protein pair inside a sentence.

    Spans are inclusive ``(start, end)`` token index pairs.  The held
    sentence is a per-instance copy whose entity roles single out the pair
    under consideration as PROT1/PROT2.
    """

    sentence: AnnotatedSentence
    prot1_span: tuple[int, int]
    prot2_span: tuple[int, int]
    label: str
    instance_id: str
    difficult: bool = False

    def __post_init__(self):
        if self.label not in LABELS:
            raise CorpusStructureError(
                f"instance {self.instance_id}: unknown label {self.label!r}"
            )
        n = len(self.sentence)
        for name, (s, e) in (("prot1", self.prot1_span), ("prot2", self.prot2_span)):
            if not (0 <= s <= e < n):
                raise CorpusStructureError(
                    f"instance {self.instance_id}: {name} span ({s}, {e}) out of "
                    f"bounds for {n}-token sentence"
                )
        s1, e1 = self.prot1_span
        s2, e2 = self.prot2_span
        if not (e1 < s2 or e2 < s1):
            raise CorpusStructureError(
                f"instance {self.instance_id}: spans overlap; a mention cannot "
                f"be paired with itself"
            )
        for i, tok in enumerate(self.sentence.tokens):
            want = _role_for_index(i, self.prot1_span, self.prot2_span, tok.entity_role)
            if tok.entity_role in (ROLE_PROT1, ROLE_PROT2) and tok.entity_role != want:
                raise CorpusStructureError(
                    f"instance {self.instance_id}: token {i} tagged "
                    f"{tok.entity_role} outside the corresponding span"
                )
            if want in (ROLE_PROT1, ROLE_PROT2) and tok.entity_role != want:
                raise CorpusStructureError(
                    f"instance {self.instance_id}: token {i} inside the "
                    f"{want} span is tagged {tok.entity_role}"
                )

    @property
    def doc_id(self) -> str:
        return self.sentence.doc_id


@dataclass(frozen=True)
class FoldPlan:
    """Per-fold (train doc_ids, test doc_ids), both sorted tuples."""

    folds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]

    def __post_init__(self):
        seen_test: set[str] = set()
        for idx, (train, test) in enumerate(self.folds):
            overlap = set(train) & set(test)
            if overlap:
                raise ConfigError(
                    f"fold {idx}: docs {sorted(overlap)} in both train and test"
                )
            dup = seen_test & set(test)
            if dup:
                raise ConfigError(
                    f"fold {idx}: docs {sorted(dup)} already tested in an earlier fold"
                )
            seen_test.update(test)

    def __len__(self) -> int:
        return len(self.folds)

    def validate_partition(self, doc_ids) -> None:
        """Check that the fold test sets exactly partition ``doc_ids``."""
        universe = set(doc_ids)
        covered: set[str] = set()
        for train, test in self.folds:
            covered.update(test)
        if covered != universe:
            missing = sorted(universe - covered)
            extra = sorted(covered - universe)
            raise ConfigError(
                f"fold plan does not partition the documents "
                f"(missing={missing}, unknown={extra})"
            )


def _role_for_index(i, span1, span2, base_role):
    if span1[0] <= i <= span1[1]:
        return ROLE_PROT1
    if span2[0] <= i <= span2[1]:
        return ROLE_PROT2
    return ROLE_PROT if base_role in PROTEIN_ROLES else ROLE_NONE


def load_corpus(path, fmt: str = "tsv") -> list[AnnotatedSentence]:
    """Read a token-per-line corpus; blank lines separate sentences.

    ``tsv`` (the interchange format documented above) is the only format
    currently understood.
    """
    if fmt != "tsv":
        raise ValueError(f"unknown corpus format {fmt!r}")
    sentences: list[AnnotatedSentence] = []
    block: list[tuple[int, list[str]]] = []
    with open(path, encoding="utf-8") as fh:
        for line_number, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                if block:
                    sentences.append(_build_sentence(block))
                    block = []
                continue
            fields = line.split("\t")
            if len(fields) != 9:
                raise CorpusParseError(
                    f"expected 9 tab-separated fields, got {len(fields)}", line_number
                )
            block.append((line_number, fields))
    if block:
        sentences.append(_build_sentence(block))

    seen: set[tuple[str, str]] = set()
    for sent in sentences:
        if sent.key in seen:
            raise CorpusStructureError(
                f"duplicate sentence id {sent.doc_id}/{sent.sent_id}"
            )
        seen.add(sent.key)
    return sentences


def _build_sentence(block) -> AnnotatedSentence:
    first_no, first = block[0]
    doc_id, sent_id = first[0], first[1]
    tokens: list[AnnotatedToken] = []
    for expected_idx, (line_number, f) in enumerate(block):
        if f[0] != doc_id or f[1] != sent_id:
            raise CorpusParseError(
                f"sentence block mixes ids {doc_id}/{sent_id} and {f[0]}/{f[1]}",
                line_number,
            )
        try:
            idx = int(f[2])
        except ValueError:
            raise CorpusParseError(f"bad token index {f[2]!r}", line_number) from None
        if idx != expected_idx:
            raise CorpusParseError(
                f"token index {idx} out of sequence (expected {expected_idx})",
                line_number,
            )
        surface, pos, chunk, role = f[3], f[4], f[5], f[6]
        if not surface:
            raise CorpusParseError("empty surface form", line_number)
        if role not in ROLES:
            raise CorpusParseError(f"unknown entity role {role!r}", line_number)
        if f[7] == ROOT_MARKER:
            head: int | None = None
        else:
            try:
                head = int(f[7])
            except ValueError:
                raise CorpusParseError(f"bad head index {f[7]!r}", line_number) from None
        dep = f[8]
        if not dep:
            raise CorpusParseError("empty dependency label", line_number)
        tokens.append(AnnotatedToken(surface, pos, chunk, role, head, dep))
    return AnnotatedSentence(tuple(tokens), doc_id, sent_id)


def write_corpus(sentences, path) -> None:
    """Inverse of :func:`load_corpus`; round-trips structurally."""
    with open(path, "w", encoding="utf-8") as fh:
        for sent in sentences:
            for i, tok in enumerate(sent.tokens):
                head = ROOT_MARKER if tok.head is None else str(tok.head)
                fh.write(
                    "\t".join(
                        (
                            sent.doc_id,
                            sent.sent_id,
                            str(i),
                            tok.surface,
                            tok.pos,
                            tok.chunk,
                            tok.entity_role,
                            head,
                            tok.dep_label,
                        )
                    )
                    + "\n"
                )
            fh.write("\n")


def mention_spans(sentence: AnnotatedSentence) -> list[tuple[int, int]]:
    """Maximal runs of protein-tagged tokens, as inclusive index spans."""
    spans: list[tuple[int, int]] = []
    start = None
    for i, tok in enumerate(sentence.tokens):
        if tok.entity_role in PROTEIN_ROLES:
            if start is None:
                start = i
        elif start is not None:
            spans.append((start, i - 1))
            start = None
    if start is not None:
        spans.append((start, len(sentence.tokens) - 1))
    return spans


def pair_key(doc_id, sent_id, span_a, span_b):
    """Normalized lookup key for an unordered mention pair."""
    lo, hi = sorted((tuple(span_a), tuple(span_b)))
    return (doc_id, sent_id, lo, hi)


def make_instances(sentences, positive_pairs=None) -> list[PpiInstance]:
    """Generate one instance per unordered pair of distinct mentions.

    ``positive_pairs`` is an optional set of :func:`pair_key` keys; matching
    pairs are labeled PPI, everything else OTHER.  Sentences with fewer than
    two mentions contribute nothing.
    """
    instances: list[PpiInstance] = []
    for sent in sentences:
        spans = mention_spans(sent)
        for span1, span2 in itertools.combinations(spans, 2):
            key = pair_key(sent.doc_id, sent.sent_id, span1, span2)
            label = LABEL_PPI if positive_pairs and key in positive_pairs else LABEL_OTHER
            instances.append(_build_instance(sent, span1, span2, label, False, None))
    return instances


def _build_instance(sent, span1, span2, label, difficult, instance_id) -> PpiInstance:
    tokens = tuple(
        replace(tok, entity_role=_role_for_index(i, span1, span2, tok.entity_role))
        for i, tok in enumerate(sent.tokens)
    )
    marked = AnnotatedSentence(tokens, sent.doc_id, sent.sent_id)
    if instance_id is None:
        instance_id = (
            f"{sent.doc_id}:{sent.sent_id}:{span1[0]}-{span1[1]}:{span2[0]}-{span2[1]}"
        )
    return PpiInstance(marked, tuple(span1), tuple(span2), label, instance_id, difficult)


def load_instances(path, sentences) -> list[PpiInstance]:
    """Read a candidate-pair file and join it against loaded sentences."""
    by_key = {sent.key: sent for sent in sentences}
    instances: list[PpiInstance] = []
    with open(path, encoding="utf-8") as fh:
        for line_number, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            f = line.split("\t")
            if len(f) not in (8, 9):
                raise CorpusParseError(
                    f"expected 8 or 9 tab-separated fields, got {len(f)}", line_number
                )
            instance_id, doc_id, sent_id = f[0], f[1], f[2]
            sent = by_key.get((doc_id, sent_id))
            if sent is None:
                raise CorpusStructureError(
                    f"instance {instance_id}: unknown sentence {doc_id}/{sent_id}"
                )
            try:
                bounds = [int(x) for x in f[3:7]]
            except ValueError:
                raise CorpusParseError("non-integer span bound", line_number) from None
            label = f[7]
            if label not in LABELS:
                raise CorpusParseError(f"unknown label {label!r}", line_number)
            difficult = False
            if len(f) == 9:
                if f[8] not in ("0", "1"):
                    raise CorpusParseError(
                        f"difficult flag must be 0 or 1, got {f[8]!r}", line_number
                    )
                difficult = f[8] == "1"
            span1 = (bounds[0], bounds[1])
            span2 = (bounds[2], bounds[3])
            instances.append(
                _build_instance(sent, span1, span2, label, difficult, instance_id)
            )
    return instances


def write_instances(instances, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(
                "\t".join(
                    (
                        inst.instance_id,
                        inst.sentence.doc_id,
                        inst.sentence.sent_id,
                        str(inst.prot1_span[0]),
                        str(inst.prot1_span[1]),
                        str(inst.prot2_span[0]),
                        str(inst.prot2_span[1]),
                        inst.label,
                        "1" if inst.difficult else "0",
                    )
                )
                + "\n"
            )


def split_folds(instances, k: int, seed: int) -> FoldPlan:
    """Document-level k-fold assignment, deterministic for a given seed.

    Documents are shuffled once and dealt round-robin, so test-set sizes
    differ by at most one document.
    """
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    doc_ids = sorted({inst.doc_id for inst in instances})
    if len(doc_ids) < k:
        raise ConfigError(f"{len(doc_ids)} documents cannot populate {k} folds")
    shuffled = list(doc_ids)
    random.Random(seed).shuffle(shuffled)
    folds = []
    for i in range(k):
        test = sorted(shuffled[i::k])
        train = sorted(d for d in doc_ids if d not in set(test))
        folds.append((tuple(train), tuple(test)))
    plan = FoldPlan(tuple(folds))
    plan.validate_partition(doc_ids)
    return plan

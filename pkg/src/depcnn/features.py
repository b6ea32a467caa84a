"""Token feature encoding: the two-channel numeric view of a candidate pair.

Every token row is the concatenation, in fixed order, of

    word embedding (200 by default)
    | POS group one-hot (8)
    | chunk tag one-hot (18)
    | entity role one-hot (4)
    | dependency label one-hot (101)
    | position features (2 x 10 bits)

for a default row width of 351.  Channel 1 holds each token's own row;
channel 2 holds the row of the token's dependency head (the sentence root
maps to a dedicated pseudo-token), except that the position slice always
stays the child's own, keeping the two channels positionally aligned.

Each 10-bit position half encodes one signed distance as a 2-bit sign
one-hot (bit 0 set iff the distance is negative) followed by an 8-bin
magnitude one-hot, so exactly two bits are set per half.
"""

from __future__ import annotations

import hashlib
import zlib
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .corpus import (
    ROLE_NONE,
    ROLE_PROT,
    ROLE_PROT1,
    ROLE_PROT2,
    ROOT_MARKER,
    AnnotatedSentence,
    AnnotatedToken,
    PpiInstance,
)

UNK_WORD = "<unk>"
ROOT_WORD = "<root>"
UNK_DEP = "<unk>"

POS_GROUPS = ("NOUN", "VERB", "ADJ", "ADV", "PRON_DET", "ADP_CONJ", "NUM", "OTHER")

# Pattern lists per group; a trailing * matches by prefix.  First match wins,
# anything unmatched falls into OTHER.
DEFAULT_POS_RULES = (
    ("NOUN", ("NN*",)),
    ("VERB", ("VB*", "MD")),
    ("ADJ", ("JJ*",)),
    ("ADV", ("RB*",)),
    ("PRON_DET", ("PRP*", "DT", "WDT", "WP*")),
    ("ADP_CONJ", ("IN", "TO", "CC")),
    ("NUM", ("CD",)),
    ("OTHER", ()),
)

DEFAULT_CHUNK_VOCAB = (
    "O",
    "B-NP", "I-NP",
    "B-VP", "I-VP",
    "B-PP", "I-PP",
    "B-ADVP", "I-ADVP",
    "B-ADJP", "I-ADJP",
    "B-SBAR", "I-SBAR",
    "B-PRT", "I-PRT",
    "B-CONJP", "I-CONJP",
    "B-INTJ",
)

ENTITY_ROLES = (ROLE_PROT1, ROLE_PROT2, ROLE_PROT, ROLE_NONE)

# Lower edges of the magnitude bins: [0] [1] [2] [3] [4] [5-8] [9-16] [17+).
DEFAULT_POSITION_BINS = (0, 1, 2, 3, 4, 5, 9, 17)

_BASE_DEP_LABELS = (
    ROOT_MARKER,
    "acl", "acl:relcl", "advcl", "advmod", "amod", "appos", "aux", "auxpass",
    "case", "cc", "cc:preconj", "ccomp", "compound", "compound:prt", "conj",
    "cop", "csubj", "csubjpass", "dep", "det", "det:predet", "discourse",
    "dobj", "expl", "iobj", "mark", "mwe", "neg", "nmod", "nmod:npmod",
    "nmod:poss", "nmod:tmod", "nsubj", "nsubjpass", "nummod", "parataxis",
    "partmod", "pobj", "prep", "punct", "xcomp",
)

POS_WIDTH = 8
CHUNK_WIDTH = 18
ENTITY_WIDTH = 4
DEP_WIDTH = 101
POSITION_WIDTH = 20
FEATURE_WIDTH = POS_WIDTH + CHUNK_WIDTH + ENTITY_WIDTH + DEP_WIDTH + POSITION_WIDTH

_DTYPES = {"f64": np.float64, "f32": np.float32}


class EmbeddingFormatError(Exception):
    """A word-embedding file that does not follow the text format."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


def _pad_dep_vocab(labels) -> tuple[str, ...]:
    """Sort, truncate to 100 slots, pad with placeholders, append UNK."""
    kept = sorted(set(labels))[: DEP_WIDTH - 1]
    slots = list(kept)
    i = 0
    while len(slots) < DEP_WIDTH - 1:
        slots.append(f"<unused-{i}>")
        i += 1
    slots.append(UNK_DEP)
    return tuple(slots)


@dataclass(frozen=True)
class FeatureSchema:
    """Frozen vocabularies for the categorical token features.

    Lookups are total: unknown POS tags fall into the OTHER group, unknown
    chunk tags into the O slot, unknown dependency labels into the UNK slot.
    """

    pos_rules: tuple = DEFAULT_POS_RULES
    chunk_vocab: tuple = DEFAULT_CHUNK_VOCAB
    dep_vocab: tuple = field(default_factory=lambda: _pad_dep_vocab(_BASE_DEP_LABELS))
    position_bins: tuple = DEFAULT_POSITION_BINS

    def __post_init__(self):
        if len(self.pos_rules) != POS_WIDTH:
            raise ValueError(f"need {POS_WIDTH} POS groups, got {len(self.pos_rules)}")
        if len(self.chunk_vocab) != CHUNK_WIDTH:
            raise ValueError(
                f"need {CHUNK_WIDTH} chunk tags, got {len(self.chunk_vocab)}"
            )
        if "O" not in self.chunk_vocab:
            raise ValueError("chunk vocabulary must contain the O tag")
        if len(self.dep_vocab) != DEP_WIDTH:
            raise ValueError(
                f"need {DEP_WIDTH} dependency labels, got {len(self.dep_vocab)}"
            )
        if UNK_DEP not in self.dep_vocab:
            raise ValueError("dependency vocabulary must contain the UNK slot")
        if len(self.position_bins) != POSITION_WIDTH // 2 - 2:
            raise ValueError(
                f"need {POSITION_WIDTH // 2 - 2} magnitude bins, "
                f"got {len(self.position_bins)}"
            )
        if list(self.position_bins) != sorted(set(self.position_bins)) or (
            self.position_bins[0] != 0
        ):
            raise ValueError("magnitude bins must be strictly increasing from 0")
        exact: dict[str, int] = {}
        prefixes: list[tuple[str, int]] = []
        for idx, (_, patterns) in enumerate(self.pos_rules):
            for pat in patterns:
                if pat.endswith("*"):
                    prefixes.append((pat[:-1], idx))
                else:
                    exact.setdefault(pat, idx)
        object.__setattr__(self, "_pos_exact", exact)
        object.__setattr__(self, "_pos_prefixes", tuple(prefixes))
        object.__setattr__(
            self, "_chunk_index", {tag: i for i, tag in enumerate(self.chunk_vocab)}
        )
        object.__setattr__(
            self, "_dep_index", {lab: i for i, lab in enumerate(self.dep_vocab)}
        )

    @classmethod
    def default(cls) -> "FeatureSchema":
        return cls()

    @classmethod
    def from_sentences(cls, sentences) -> "FeatureSchema":
        """Build the dependency vocabulary from a corpus; the root label is
        always included."""
        labels = {ROOT_MARKER}
        for sent in sentences:
            for tok in sent.tokens:
                labels.add(tok.dep_label)
        return cls(dep_vocab=_pad_dep_vocab(labels))

    # -- categorical encoders -------------------------------------------------

    def pos_group_index(self, tag: str) -> int:
        idx = self._pos_exact.get(tag)
        if idx is not None:
            return idx
        for prefix, gidx in self._pos_prefixes:
            if tag.startswith(prefix):
                return gidx
        return len(self.pos_rules) - 1  # OTHER

    def encode_pos(self, tag: str) -> np.ndarray:
        vec = np.zeros(POS_WIDTH)
        vec[self.pos_group_index(tag)] = 1.0
        return vec

    def encode_chunk(self, tag: str) -> np.ndarray:
        vec = np.zeros(CHUNK_WIDTH)
        vec[self._chunk_index.get(tag, self._chunk_index["O"])] = 1.0
        return vec

    def encode_entity(self, role: str) -> np.ndarray:
        vec = np.zeros(ENTITY_WIDTH)
        vec[ENTITY_ROLES.index(role)] = 1.0
        return vec

    def encode_dep(self, label: str) -> np.ndarray:
        vec = np.zeros(DEP_WIDTH)
        vec[self._dep_index.get(label, self._dep_index[UNK_DEP])] = 1.0
        return vec

    def magnitude_bin(self, magnitude: int) -> int:
        return bisect_right(self.position_bins, magnitude) - 1

    def _position_half(self, distance: int) -> np.ndarray:
        half = np.zeros(POSITION_WIDTH // 2)
        half[0 if distance < 0 else 1] = 1.0
        half[2 + self.magnitude_bin(abs(int(distance)))] = 1.0
        return half

    def encode_position(self, d1: int, d2: int) -> np.ndarray:
        return np.concatenate((self._position_half(d1), self._position_half(d2)))

    # -- layout ----------------------------------------------------------------

    @property
    def feature_width(self) -> int:
        return FEATURE_WIDTH

    def width(self, emb_dim: int) -> int:
        return emb_dim + FEATURE_WIDTH

    def slices(self, emb_dim: int) -> dict[str, slice]:
        """Column ranges of each feature block inside a token row."""
        offsets = {}
        start = 0
        for name, width in (
            ("word", emb_dim),
            ("pos", POS_WIDTH),
            ("chunk", CHUNK_WIDTH),
            ("entity", ENTITY_WIDTH),
            ("dep", DEP_WIDTH),
            ("position", POSITION_WIDTH),
        ):
            offsets[name] = slice(start, start + width)
            start += width
        return offsets

    @property
    def schema_hash(self) -> str:
        return hashlib.sha256(render_schema(self).encode("utf-8")).hexdigest()


def render_schema(schema: FeatureSchema) -> str:
    lines = ["# depcnn feature schema v1", "[pos_groups]"]
    for name, patterns in schema.pos_rules:
        lines.append(f"{name}\t{' '.join(patterns)}".rstrip())
    lines.append("[chunk_vocab]")
    lines.extend(schema.chunk_vocab)
    lines.append("[dep_vocab]")
    lines.extend(schema.dep_vocab)
    lines.append("[position_bins]")
    lines.extend(str(edge) for edge in schema.position_bins)
    return "\n".join(lines) + "\n"


def write_schema(schema: FeatureSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_schema(schema))


def read_schema(path) -> FeatureSchema:
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = sections.setdefault(line[1:-1], [])
                continue
            if current is None:
                raise ValueError(f"schema line outside any section: {line!r}")
            current.append(line)
    try:
        pos_rules = []
        for line in sections["pos_groups"]:
            parts = line.split("\t")
            name = parts[0]
            patterns = tuple(parts[1].split(" ")) if len(parts) > 1 and parts[1] else ()
            pos_rules.append((name, patterns))
        return FeatureSchema(
            pos_rules=tuple(pos_rules),
            chunk_vocab=tuple(sections["chunk_vocab"]),
            dep_vocab=tuple(sections["dep_vocab"]),
            position_bins=tuple(int(x) for x in sections["position_bins"]),
        )
    except KeyError as exc:
        raise ValueError(f"schema file missing section {exc}") from None


# -- embeddings ------------------------------------------------------------------


def _fallback_vector(word: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic per-word initializer, uniform in [-0.05, 0.05]."""
    entropy = np.random.SeedSequence([abs(int(seed)), zlib.crc32(word.encode("utf-8"))])
    return np.random.default_rng(entropy).uniform(-0.05, 0.05, dim)


class EmbeddingTable:
    """Word-vector lookup with deterministic fallbacks.

    A table loaded from a file has a closed vocabulary: unseen words share a
    single UNK vector.  A random table is open: every word receives its own
    vector, derived deterministically from (seed, word).  Vectors for the
    reserved entries ``<unk>`` and ``<root>`` are taken from the file when
    present, otherwise generated by the same fallback initializer.  The
    padding vector is all zeros.
    """

    def __init__(self, dim: int, vectors=None, seed: int = 0, open_vocab: bool = False):
        self.dim = dim
        self.seed = seed
        self.open_vocab = open_vocab
        self._vectors: dict[str, np.ndarray] = {}
        for word, vec in (vectors or {}).items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (dim,):
                raise ValueError(f"vector for {word!r} has shape {arr.shape}")
            self._vectors[word] = arr
        self._pad = np.zeros(dim)

    @classmethod
    def random(cls, dim: int = 200, seed: int = 0) -> "EmbeddingTable":
        return cls(dim, seed=seed, open_vocab=True)

    @classmethod
    def load(cls, path, dim: int = 200, seed: int = 0) -> "EmbeddingTable":
        vectors: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split()
            if len(header) != 2:
                raise EmbeddingFormatError(
                    "header must be '<vocab_size> <dim>'", line_number=1
                )
            try:
                _, file_dim = int(header[0]), int(header[1])
            except ValueError:
                raise EmbeddingFormatError(
                    f"non-integer header {header!r}", line_number=1
                ) from None
            if file_dim != dim:
                raise EmbeddingFormatError(
                    f"file carries {file_dim}-dim vectors, expected {dim}",
                    line_number=1,
                )
            for line_number, raw in enumerate(fh, start=2):
                line = raw.rstrip("\n")
                if not line:
                    continue
                parts = line.split(" ")
                if len(parts) != dim + 1:
                    raise EmbeddingFormatError(
                        f"expected a word and {dim} components, got {len(parts)} fields",
                        line_number,
                    )
                try:
                    vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
                except ValueError:
                    raise EmbeddingFormatError(
                        "non-numeric vector component", line_number
                    ) from None
        return cls(dim, vectors=vectors, seed=seed)

    def vector(self, word: str) -> np.ndarray:
        vec = self._vectors.get(word)
        if vec is not None:
            return vec
        if self.open_vocab:
            vec = _fallback_vector(word, self.dim, self.seed)
            self._vectors[word] = vec
            return vec
        return self.unk_vector

    @property
    def unk_vector(self) -> np.ndarray:
        vec = self._vectors.get(UNK_WORD)
        if vec is None:
            vec = _fallback_vector(UNK_WORD, self.dim, self.seed)
            self._vectors[UNK_WORD] = vec
        return vec

    @property
    def root_vector(self) -> np.ndarray:
        vec = self._vectors.get(ROOT_WORD)
        if vec is None:
            vec = _fallback_vector(ROOT_WORD, self.dim, self.seed)
            self._vectors[ROOT_WORD] = vec
        return vec

    @property
    def pad_vector(self) -> np.ndarray:
        return self._pad

    def __contains__(self, word: str) -> bool:
        return word in self._vectors


def load_embeddings(path, dim: int) -> EmbeddingTable:
    """Read a word2vec-style text file: a ``vocab_size dim`` header followed
    by ``word v1 ... vdim`` lines."""
    return EmbeddingTable.load(path, dim=dim)


# -- instance encoding ------------------------------------------------------------


def span_distance(index: int, span: tuple[int, int]) -> int:
    """Signed token distance to the nearest token of a mention span."""
    start, end = span
    if index < start:
        return index - start
    if index > end:
        return index - end
    return 0


def head_of(tok_index: int, sentence: AnnotatedSentence) -> AnnotatedToken | None:
    """The dependency head of a token, or None for the sentence root."""
    head = sentence.tokens[tok_index].head
    return None if head is None else sentence.tokens[head]


def token_vector(
    tok: AnnotatedToken,
    d1: int,
    d2: int,
    table: EmbeddingTable,
    schema: FeatureSchema,
) -> np.ndarray:
    return np.concatenate(
        (
            table.vector(tok.surface),
            schema.encode_pos(tok.pos),
            schema.encode_chunk(tok.chunk),
            schema.encode_entity(tok.entity_role),
            schema.encode_dep(tok.dep_label),
            schema.encode_position(d1, d2),
        )
    )


def _static_part(tok: AnnotatedToken, table, schema) -> np.ndarray:
    """Everything but the position slice, for one token."""
    return np.concatenate(
        (
            table.vector(tok.surface),
            schema.encode_pos(tok.pos),
            schema.encode_chunk(tok.chunk),
            schema.encode_entity(tok.entity_role),
            schema.encode_dep(tok.dep_label),
        )
    )


def _root_static_part(table, schema) -> np.ndarray:
    # Word slice from the dedicated root vector; POS falls into the catch-all
    # group, chunk and entity into their O slots, dependency onto ROOT.
    pos = np.zeros(POS_WIDTH)
    pos[len(schema.pos_rules) - 1] = 1.0
    return np.concatenate(
        (
            table.root_vector,
            pos,
            schema.encode_chunk("O"),
            schema.encode_entity(ROLE_NONE),
            schema.encode_dep(ROOT_MARKER),
        )
    )


@dataclass
class EncodedInstance:
    """Two zero-padded (max_len x d) channels plus bookkeeping fields.

    ``word_ids1``/``word_ids2`` hold vocabulary row indices for the word
    slice of each channel (-1 on padding rows); they are populated only when
    the dataset carries a materialized embedding matrix for fine-tuning.
    """

    channel1: np.ndarray
    channel2: np.ndarray
    valid_len: int
    label: str
    instance_id: str
    doc_id: str
    difficult: bool = False
    word_ids1: np.ndarray | None = None
    word_ids2: np.ndarray | None = None


@dataclass
class EncodedDataset:
    """Encoded instances plus the schema/layout they were produced with."""

    instances: list[EncodedInstance]
    schema_hash: str
    max_len: int
    d: int
    emb_dim: int
    dtype: str = "f64"
    vocab: tuple[str, ...] | None = None
    embedding_matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, idx):
        return self.instances[idx]


def encode_instance(
    inst: PpiInstance,
    table: EmbeddingTable,
    schema: FeatureSchema,
    max_len: int = 160,
    dtype=np.float64,
    word_index: dict[str, int] | None = None,
) -> EncodedInstance:
    """Build both channels for one candidate pair.

    Sentences longer than ``max_len`` are truncated; head lookups and span
    distances still use the original token indices, so a head beyond the
    truncation point keeps its features.
    """
    sent = inst.sentence
    n = len(sent.tokens)
    valid = min(n, max_len)
    d = schema.width(table.dim)
    ch1 = np.zeros((max_len, d), dtype=dtype)
    ch2 = np.zeros((max_len, d), dtype=dtype)
    ids1 = ids2 = None
    if word_index is not None:
        ids1 = np.full(max_len, -1, dtype=np.int64)
        ids2 = np.full(max_len, -1, dtype=np.int64)

    static = {}
    root_static = None
    for i in range(valid):
        tok = sent.tokens[i]
        pos_vec = schema.encode_position(
            span_distance(i, inst.prot1_span), span_distance(i, inst.prot2_span)
        )
        if i not in static:
            static[i] = _static_part(tok, table, schema)
        ch1[i, : d - POSITION_WIDTH] = static[i]
        ch1[i, d - POSITION_WIDTH :] = pos_vec

        head = tok.head
        if head is None:
            if root_static is None:
                root_static = _root_static_part(table, schema)
            ch2[i, : d - POSITION_WIDTH] = root_static
        else:
            if head not in static:
                static[head] = _static_part(sent.tokens[head], table, schema)
            ch2[i, : d - POSITION_WIDTH] = static[head]
        ch2[i, d - POSITION_WIDTH :] = pos_vec

        if word_index is not None:
            unk = word_index[UNK_WORD]
            ids1[i] = word_index.get(tok.surface, unk)
            if head is None:
                ids2[i] = word_index[ROOT_WORD]
            else:
                ids2[i] = word_index.get(sent.tokens[head].surface, unk)

    return EncodedInstance(
        channel1=ch1,
        channel2=ch2,
        valid_len=valid,
        label=inst.label,
        instance_id=inst.instance_id,
        doc_id=sent.doc_id,
        difficult=inst.difficult,
        word_ids1=ids1,
        word_ids2=ids2,
    )


def encode_dataset(
    instances,
    table: EmbeddingTable,
    schema: FeatureSchema,
    max_len: int = 160,
    dtype: str = "f64",
    with_ids: bool = True,
) -> EncodedDataset:
    """Encode a corpus; optionally materialize a vocabulary row per surface
    form (plus the UNK and root rows) so embeddings can be fine-tuned."""
    np_dtype = _DTYPES[dtype]
    word_index = None
    vocab = None
    matrix = None
    if with_ids:
        surfaces = sorted(
            {tok.surface for inst in instances for tok in inst.sentence.tokens}
        )
        vocab = tuple(surfaces) + (UNK_WORD, ROOT_WORD)
        word_index = {w: i for i, w in enumerate(vocab)}
        matrix = np.stack([table.vector(w) for w in vocab]).astype(np_dtype)
    encoded = [
        encode_instance(inst, table, schema, max_len, np_dtype, word_index)
        for inst in instances
    ]
    return EncodedDataset(
        instances=encoded,
        schema_hash=schema.schema_hash,
        max_len=max_len,
        d=schema.width(table.dim),
        emb_dim=table.dim,
        dtype=dtype,
        vocab=vocab,
        embedding_matrix=matrix,
    )

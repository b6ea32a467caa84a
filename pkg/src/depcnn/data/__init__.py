"""Bundled toy corpus: 30 short synthetic sentences over 15 documents with
hand-built dependency annotations, one candidate pair per sentence (15 PPI,
15 OTHER, 5 flagged difficult).  Used by the tests and the CLI demos."""

from pathlib import Path

_HERE = Path(__file__).parent


def toy_corpus_path() -> Path:
    return _HERE / "toy_corpus.tsv"


def toy_instances_path() -> Path:
    return _HERE / "toy_instances.tsv"


def load_toy():
    """The toy corpus as (sentences, instances)."""
    from ..corpus import load_corpus, load_instances

    sentences = load_corpus(toy_corpus_path())
    return sentences, load_instances(toy_instances_path(), sentences)

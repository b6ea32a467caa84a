"""Shared fixtures: a hand-annotated reference sentence and the toy corpus."""

import numpy as np
import pytest

from depcnn.corpus import load_corpus, load_instances
from depcnn.data import toy_corpus_path, toy_instances_path
from depcnn.features import EmbeddingTable, FeatureSchema, encode_dataset

# Nine-token example sentence with a collapsed-preposition dependency parse.
# Head surfaces, in token order:
#   binds binds ROOT binds domain domain binds domain domain
FIG_SENTENCE_TSV = """\
x1\ts1\t0\tARFTS\tNNP\tB-NP\tPROT1\t2\tnsubj
x1\ts1\t1\tspecifically\tRB\tB-ADVP\tO\t2\tadvmod
x1\ts1\t2\tbinds\tVBZ\tB-VP\tO\tROOT\tROOT
x1\ts1\t3\tto\tTO\tB-PP\tO\t2\tprep
x1\ts1\t4\ta\tDT\tB-NP\tO\t6\tdet
x1\ts1\t5\tdistinct\tJJ\tI-NP\tO\t6\tamod
x1\ts1\t6\tdomain\tNN\tI-NP\tO\t2\tprep_to
x1\ts1\t7\tin\tIN\tB-PP\tO\t6\tprep
x1\ts1\t8\tXIAP-BIR3\tNNP\tB-NP\tPROT2\t6\tprep_in
"""

FIG_HEAD_SURFACES = (
    "binds", "binds", None, "binds", "domain", "domain", "binds", "domain", "domain",
)

FIG_INSTANCE_LINE = "fig-1\tx1\ts1\t0\t0\t8\t8\tPPI\t0\n"


@pytest.fixture(scope="session")
def fig_head_surfaces():
    return FIG_HEAD_SURFACES


@pytest.fixture(scope="session")
def fig_sentence(tmp_path_factory):
    path = tmp_path_factory.mktemp("fig") / "corpus.tsv"
    path.write_text(FIG_SENTENCE_TSV, encoding="utf-8")
    sentences = load_corpus(path)
    assert len(sentences) == 1
    return sentences[0]


@pytest.fixture(scope="session")
def fig_instance(fig_sentence, tmp_path_factory):
    path = tmp_path_factory.mktemp("fig-inst") / "instances.tsv"
    path.write_text(FIG_INSTANCE_LINE, encoding="utf-8")
    return load_instances(path, [fig_sentence])[0]


@pytest.fixture(scope="session")
def toy_sentences():
    return load_corpus(toy_corpus_path())


@pytest.fixture(scope="session")
def toy_instances(toy_sentences):
    return load_instances(toy_instances_path(), toy_sentences)


@pytest.fixture(scope="session")
def toy_schema(toy_sentences):
    return FeatureSchema.from_sentences(toy_sentences)


@pytest.fixture(scope="session")
def toy_table():
    return EmbeddingTable.random(200, seed=5)


@pytest.fixture(scope="session")
def toy_dataset(toy_instances, toy_table, toy_schema):
    return encode_dataset(
        toy_instances, toy_table, toy_schema, max_len=16, dtype="f64", with_ids=True
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

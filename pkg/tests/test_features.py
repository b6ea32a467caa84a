"""Feature encoders, two-channel instance encoding, embedding loading."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depcnn.corpus import AnnotatedSentence, AnnotatedToken, PpiInstance
from depcnn.features import (
    DEP_WIDTH,
    FEATURE_WIDTH,
    UNK_DEP,
    EmbeddingFormatError,
    EmbeddingTable,
    FeatureSchema,
    encode_instance,
    head_of,
    load_embeddings,
    read_schema,
    render_schema,
    span_distance,
    token_vector,
    write_schema,
)

SCHEMA = FeatureSchema.default()

# Independent statement of the 8-way POS grouping, written out tag by tag.
POS_GROUP_ORACLE = {
    "NOUN": ["NN", "NNS", "NNP", "NNPS"],
    "VERB": ["VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "MD"],
    "ADJ": ["JJ", "JJR", "JJS"],
    "ADV": ["RB", "RBR", "RBS"],
    "PRON_DET": ["PRP", "PRP$", "DT", "WDT", "WP", "WP$"],
    "ADP_CONJ": ["IN", "TO", "CC"],
    "NUM": ["CD"],
    "OTHER": ["FW", "UH", "SYM", ".", ",", "XYZ", ""],
}


class TestPosEncoder:
    def test_group_map_matches_oracle(self):
        names = [name for name, _ in SCHEMA.pos_rules]
        for group, tags in POS_GROUP_ORACLE.items():
            for tag in tags:
                vec = SCHEMA.encode_pos(tag)
                assert vec.sum() == 1.0, tag
                assert names[int(vec.argmax())] == group, tag

    def test_known_tags(self):
        assert SCHEMA.encode_pos("NN").argmax() == SCHEMA.pos_group_index("NNS")
        assert SCHEMA.encode_pos("VBZ").argmax() == SCHEMA.pos_group_index("MD")

    def test_unknown_tag_falls_into_other(self):
        other = [name for name, _ in SCHEMA.pos_rules].index("OTHER")
        assert SCHEMA.encode_pos("XYZ").argmax() == other


class TestChunkEncoder:
    def test_known_tag(self):
        vec = SCHEMA.encode_chunk("B-NP")
        assert vec.sum() == 1.0
        assert SCHEMA.chunk_vocab[int(vec.argmax())] == "B-NP"

    def test_unknown_maps_to_o_slot(self):
        assert np.array_equal(SCHEMA.encode_chunk("B-WEIRD"), SCHEMA.encode_chunk("O"))

    def test_all_18_tags_distinct(self):
        vectors = [SCHEMA.encode_chunk(tag) for tag in SCHEMA.chunk_vocab]
        assert len(vectors) == 18
        for i, a in enumerate(vectors):
            for b in vectors[i + 1 :]:
                assert not np.array_equal(a, b)


class TestEntityEncoder:
    def test_fixed_ordering(self):
        assert SCHEMA.encode_entity("PROT1").tolist() == [1, 0, 0, 0]
        assert SCHEMA.encode_entity("O").tolist() == [0, 0, 0, 1]

    def test_bijection_onto_unit_vectors(self):
        vectors = {tuple(SCHEMA.encode_entity(r)) for r in ("PROT1", "PROT2", "PROT", "O")}
        assert vectors == {tuple(np.eye(4)[i]) for i in range(4)}


class TestDepEncoder:
    def test_known_labels(self):
        for label in ("nsubj", "ROOT"):
            vec = SCHEMA.encode_dep(label)
            assert vec.sum() == 1.0
            assert SCHEMA.dep_vocab[int(vec.argmax())] == label

    def test_unknown_maps_to_unk_slot(self):
        vec = SCHEMA.encode_dep("zzz_unknown")
        assert SCHEMA.dep_vocab[int(vec.argmax())] == UNK_DEP

    def test_width(self):
        assert SCHEMA.encode_dep("dobj").shape == (DEP_WIDTH,)


class TestPositionEncoder:
    def test_reference_distances(self):
        # "binds" sits 2 after the first mention and 6 before the second.
        vec = SCHEMA.encode_position(2, -6)
        first, second = vec[:10], vec[10:]
        assert first[0] == 0.0  # not negative
        assert first[2 + SCHEMA.magnitude_bin(2)] == 1.0
        assert second[0] == 1.0  # negative
        assert second[2 + SCHEMA.magnitude_bin(6)] == 1.0
        assert SCHEMA.magnitude_bin(6) == SCHEMA.magnitude_bin(5)  # the 5..8 bin

    def test_zero_distance(self):
        half = SCHEMA.encode_position(0, 0)[:10]
        assert half[0] == 0.0 and half[1] == 1.0
        assert half[2] == 1.0  # bin of 0

    def test_exhaustive_two_bits_per_half(self):
        for d in range(-200, 201):
            vec = SCHEMA.encode_position(d, -d)
            assert vec[:10].sum() == 2.0, d
            assert vec[10:].sum() == 2.0, d

    def test_binning_edges(self):
        for magnitude, expected in [
            (0, 0), (1, 1), (2, 2), (3, 3), (4, 4),
            (5, 5), (8, 5), (9, 6), (16, 6), (17, 7), (200, 7),
        ]:
            assert SCHEMA.magnitude_bin(magnitude) == expected, magnitude

    @settings(max_examples=100, deadline=None)
    @given(
        st.integers(min_value=1, max_value=200),
        st.integers(min_value=1, max_value=200),
    )
    def test_sign_flip_moves_only_sign_bits(self, a, b):
        plus = SCHEMA.encode_position(a, b)
        minus = SCHEMA.encode_position(-a, -b)
        for offset in (0, 10):
            assert plus[offset] == minus[offset + 1]
            assert plus[offset + 1] == minus[offset]
            assert np.array_equal(
                plus[offset + 2 : offset + 10], minus[offset + 2 : offset + 10]
            )


class TestSpanDistance:
    def test_reference_sentence_distances(self, fig_instance):
        # token "binds" (index 2) against the two single-token mentions
        assert span_distance(2, fig_instance.prot1_span) == 2
        assert span_distance(2, fig_instance.prot2_span) == -6

    def test_multi_token_span_uses_nearest_edge(self):
        span = (3, 5)
        assert span_distance(1, span) == -2
        assert span_distance(4, span) == 0
        assert span_distance(8, span) == 3


class TestTokenVector:
    def test_length_is_351(self, fig_sentence, toy_table):
        vec = token_vector(fig_sentence.tokens[0], 0, -8, toy_table, SCHEMA)
        assert vec.shape == (351,)
        assert SCHEMA.width(200) == 200 + FEATURE_WIDTH == 351

    def test_oov_word_uses_unk_vector(self):
        table = EmbeddingTable(4, vectors={"known": np.ones(4)}, seed=0)
        tok = AnnotatedToken("unseen", "NN", "B-NP", "O", None, "ROOT")
        vec = token_vector(tok, 0, 0, table, SCHEMA)
        assert np.array_equal(vec[:4], table.unk_vector)

    def test_chunk_change_is_local(self, toy_table):
        base = AnnotatedToken("kinase", "NN", "B-NP", "O", None, "ROOT")
        other = AnnotatedToken("kinase", "NN", "I-NP", "O", None, "ROOT")
        v1 = token_vector(base, 1, -1, toy_table, SCHEMA)
        v2 = token_vector(other, 1, -1, toy_table, SCHEMA)
        chunk = SCHEMA.slices(200)["chunk"]
        differs = v1 != v2
        assert differs.any()
        assert not differs[: chunk.start].any()
        assert not differs[chunk.stop :].any()


class TestHeadOf:
    def test_reference_head_sequence(self, fig_sentence, fig_head_surfaces):
        heads = [head_of(i, fig_sentence) for i in range(len(fig_sentence))]
        surfaces = [None if tok is None else tok.surface for tok in heads]
        assert tuple(surfaces) == fig_head_surfaces

    def test_root_token_maps_to_none(self, fig_sentence):
        assert head_of(2, fig_sentence) is None

    def test_single_token_sentence(self):
        sent = AnnotatedSentence(
            (AnnotatedToken("Stop", "UH", "O", "O", None, "ROOT"),), "d", "s"
        )
        assert head_of(0, sent) is None


def _expected_channel2_row(i, inst, table, schema):
    """Independent recomputation of one head-channel row from the head
    sequence: the head token's own features with the child's distances."""
    sent = inst.sentence
    d1 = span_distance(i, inst.prot1_span)
    d2 = span_distance(i, inst.prot2_span)
    head = head_of(i, sent)
    if head is not None:
        return token_vector(head, d1, d2, table, schema)
    pos = np.zeros(8)
    pos[-1] = 1.0
    return np.concatenate(
        (
            table.root_vector,
            pos,
            schema.encode_chunk("O"),
            schema.encode_entity("O"),
            schema.encode_dep("ROOT"),
            schema.encode_position(d1, d2),
        )
    )


class TestEncodeInstance:
    def test_head_channel_matches_recomputation(self, fig_instance, toy_table):
        enc = encode_instance(fig_instance, toy_table, SCHEMA, max_len=16)
        for i in range(enc.valid_len):
            expected = _expected_channel2_row(i, fig_instance, toy_table, SCHEMA)
            np.testing.assert_array_equal(enc.channel2[i], expected)

    def test_first_two_rows_share_the_head_word(self, fig_instance, toy_table):
        enc = encode_instance(fig_instance, toy_table, SCHEMA, max_len=16)
        binds = token_vector(
            fig_instance.sentence.tokens[2],
            span_distance(0, fig_instance.prot1_span),
            span_distance(0, fig_instance.prot2_span),
            toy_table,
            SCHEMA,
        )
        np.testing.assert_array_equal(enc.channel2[0], binds)
        position = SCHEMA.slices(200)["position"]
        row0, row1 = enc.channel2[0], enc.channel2[1]
        np.testing.assert_array_equal(row0[: position.start], row1[: position.start])
        assert not np.array_equal(row0[position], row1[position])

    def test_padding_rows_are_zero(self, toy_instances, toy_table, toy_schema):
        inst = toy_instances[0]  # 4-token sentence
        enc = encode_instance(inst, toy_table, toy_schema, max_len=160)
        assert enc.valid_len == 4
        assert not enc.channel1[4:].any()
        assert not enc.channel2[4:].any()
        assert enc.channel1[:4].any()

    def test_long_sentence_truncated(self, toy_table):
        tokens = [AnnotatedToken("acts", "VBZ", "B-VP", "O", None, "ROOT")]
        for i in range(1, 200):
            role = "PROT" if i in (1, 3) else "O"
            tokens.append(AnnotatedToken(f"w{i}", "NN", "B-NP", role, i - 1, "dep"))
        sent = AnnotatedSentence(tuple(tokens), "d", "s")
        inst = PpiInstance(
            AnnotatedSentence(
                tuple(
                    t if j not in (1, 3) else AnnotatedToken(
                        t.surface, t.pos, t.chunk, "PROT1" if j == 1 else "PROT2",
                        t.head, t.dep_label,
                    )
                    for j, t in enumerate(sent.tokens)
                ),
                "d",
                "s",
            ),
            (1, 1),
            (3, 3),
            "PPI",
            "long-1",
        )
        enc = encode_instance(inst, toy_table, SCHEMA, max_len=160)
        assert enc.valid_len == 160
        assert enc.channel1.shape == (160, 351)

    def test_deterministic(self, fig_instance, toy_table):
        a = encode_instance(fig_instance, toy_table, SCHEMA, max_len=16)
        b = encode_instance(fig_instance, toy_table, SCHEMA, max_len=16)
        np.testing.assert_array_equal(a.channel1, b.channel1)
        np.testing.assert_array_equal(a.channel2, b.channel2)

    def test_channel2_row_diversity_bound(self, fig_instance, toy_table):
        enc = encode_instance(fig_instance, toy_table, SCHEMA, max_len=16)
        position = SCHEMA.slices(200)["position"]
        word_part_rows = {
            enc.channel2[i, : position.start].tobytes() for i in range(enc.valid_len)
        }
        heads = {
            t.head for t in fig_instance.sentence.tokens if t.head is not None
        }
        assert len(word_part_rows) <= len(heads) + 1


class TestEmbeddings:
    def _write(self, tmp_path, text):
        path = tmp_path / "vectors.txt"
        path.write_text(text, encoding="utf-8")
        return path

    def test_load_small_file(self, tmp_path):
        dims = " ".join(str(i / 10.0) for i in range(4))
        path = self._write(
            tmp_path, f"3 4\nalpha {dims}\nbeta {dims}\ngamma {dims}\n"
        )
        table = EmbeddingTable.load(path, dim=4)
        assert table.vector("alpha").shape == (4,)
        assert "gamma" in table

    def test_header_dim_mismatch(self, tmp_path):
        path = self._write(tmp_path, "3 100\n")
        with pytest.raises(EmbeddingFormatError, match="100"):
            load_embeddings(path, dim=200)

    def test_non_numeric_component_names_line(self, tmp_path):
        path = self._write(tmp_path, "2 2\nalpha 0.1 0.2\nbeta 0.1 oops\n")
        with pytest.raises(EmbeddingFormatError, match="line 3"):
            EmbeddingTable.load(path, dim=2)

    def test_wrong_component_count(self, tmp_path):
        path = self._write(tmp_path, "1 3\nalpha 0.1 0.2\n")
        with pytest.raises(EmbeddingFormatError, match="line 2"):
            EmbeddingTable.load(path, dim=3)

    def test_random_mode_is_deterministic(self):
        a = EmbeddingTable.random(16, seed=42)
        b = EmbeddingTable.random(16, seed=42)
        for word in ("kinase", "binds", "p53"):
            np.testing.assert_array_equal(a.vector(word), b.vector(word))
        c = EmbeddingTable.random(16, seed=43)
        assert not np.array_equal(a.vector("kinase"), c.vector("kinase"))

    def test_fallback_vectors_in_range(self):
        table = EmbeddingTable.random(64, seed=0)
        vec = table.vector("anything")
        assert np.all(np.abs(vec) <= 0.05)

    def test_pad_vector_is_zero(self):
        assert not EmbeddingTable.random(8, seed=0).pad_vector.any()

    def test_reserved_vectors_deterministic(self, tmp_path):
        path = self._write(tmp_path, "1 2\nalpha 0.5 0.5\n")
        t1 = EmbeddingTable.load(path, dim=2)
        t2 = EmbeddingTable.load(path, dim=2)
        np.testing.assert_array_equal(t1.unk_vector, t2.unk_vector)
        np.testing.assert_array_equal(t1.root_vector, t2.root_vector)
        assert not np.array_equal(t1.unk_vector, t1.root_vector)


class TestSchemaFile:
    def test_round_trip_preserves_hash(self, toy_schema, tmp_path):
        path = tmp_path / "schema.txt"
        write_schema(toy_schema, path)
        again = read_schema(path)
        assert again == toy_schema
        assert again.schema_hash == toy_schema.schema_hash

    def test_from_sentences_collects_labels(self, toy_sentences, toy_schema):
        labels = {t.dep_label for s in toy_sentences for t in s.tokens}
        for label in labels:
            assert label in toy_schema.dep_vocab
        assert "ROOT" in toy_schema.dep_vocab
        assert len(toy_schema.dep_vocab) == DEP_WIDTH

    def test_hash_tracks_vocabulary(self, toy_schema):
        assert toy_schema.schema_hash != FeatureSchema.default().schema_hash

    def test_render_is_stable(self, toy_schema):
        assert render_schema(toy_schema) == render_schema(toy_schema)

    def test_bad_widths_rejected(self):
        with pytest.raises(ValueError, match="chunk"):
            FeatureSchema(chunk_vocab=("O", "B-NP"))
        with pytest.raises(ValueError, match="dependency"):
            FeatureSchema(dep_vocab=("ROOT", "<unk>"))

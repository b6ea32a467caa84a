"""Binary container format, checkpoints, and dataset files."""

import numpy as np
import pytest

from depcnn.checkpoint import (
    ContainerFormatError,
    SchemaMismatchError,
    load_checkpoint,
    load_dataset,
    read_container,
    save_checkpoint,
    save_dataset,
    write_container,
)
from depcnn.harness import TrainConfig, train
from depcnn.network import ModelConfig


class TestContainer:
    def test_round_trip(self, tmp_path, rng):
        tensors = [
            ("a", rng.normal(size=(3, 4))),
            ("b:k3", rng.integers(0, 9, size=7).astype(np.int64)),
            ("c", rng.normal(size=(2, 2, 2)).astype(np.float32)),
        ]
        path = tmp_path / "box.bin"
        write_container(path, "unit", {"k": 1, "s": "x"}, tensors)
        kind, meta, loaded = read_container(path)
        assert kind == "unit"
        assert meta == {"k": 1, "s": "x"}
        for name, arr in tensors:
            np.testing.assert_array_equal(loaded[name], arr)
            assert loaded[name].dtype == arr.dtype

    def test_kind_checked(self, tmp_path):
        path = tmp_path / "box.bin"
        write_container(path, "unit", {}, [])
        with pytest.raises(ContainerFormatError, match="unit"):
            read_container(path, expect_kind="other")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTDEPCNN\n{}\n")
        with pytest.raises(ContainerFormatError):
            read_container(path)

    def test_truncated_tensor(self, tmp_path, rng):
        path = tmp_path / "box.bin"
        write_container(path, "unit", {}, [("a", rng.normal(size=(4, 4)))])
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(ContainerFormatError, match="truncated"):
            read_container(path)

    def test_rewrite_is_byte_identical(self, tmp_path, rng):
        tensors = [("w", rng.normal(size=(5, 5)))]
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        write_container(p1, "unit", {"x": 2}, tensors)
        write_container(p2, "unit", {"x": 2}, tensors)
        assert p1.read_bytes() == p2.read_bytes()

    def test_space_in_name_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_container(tmp_path / "x.bin", "unit", {}, [("a b", np.zeros(2))])


class TestCheckpoint:
    def _trained(self, toy_dataset):
        config = ModelConfig(
            windows=(3,), filters_per_window=4, max_len=16, channels=2,
            d=351, emb_dim=200, seed=1,
        )
        result = train(
            toy_dataset.instances, config,
            TrainConfig(epochs=1, shuffle_seed=1, dropout_seed=2),
        )
        return config, result

    def test_round_trip(self, toy_dataset, tmp_path):
        config, result = self._trained(toy_dataset)
        path = tmp_path / "model.bin"
        save_checkpoint(
            path, result.params, config, result.adam,
            toy_dataset.schema_hash, {"seed": 1},
        )
        ckpt = load_checkpoint(path, expect_schema_hash=toy_dataset.schema_hash)
        assert ckpt.config == config
        assert ckpt.schema_hash == toy_dataset.schema_hash
        assert ckpt.seeds == {"seed": 1}
        assert ckpt.adam.t == result.adam.t
        for name, arr in result.params.tensors().items():
            np.testing.assert_array_equal(ckpt.params.tensors()[name], arr)
            np.testing.assert_array_equal(ckpt.adam.m[name], result.adam.m[name])

    def test_schema_mismatch(self, toy_dataset, tmp_path):
        config, result = self._trained(toy_dataset)
        path = tmp_path / "model.bin"
        save_checkpoint(path, result.params, config, result.adam, "deadbeef")
        with pytest.raises(SchemaMismatchError):
            load_checkpoint(path, expect_schema_hash=toy_dataset.schema_hash)


class TestDatasetFile:
    def test_round_trip(self, toy_dataset, tmp_path):
        path = tmp_path / "data.bin"
        save_dataset(path, toy_dataset)
        again = load_dataset(path)
        assert len(again) == len(toy_dataset)
        assert again.schema_hash == toy_dataset.schema_hash
        assert again.d == toy_dataset.d
        assert again.vocab == toy_dataset.vocab
        np.testing.assert_array_equal(
            again.embedding_matrix, toy_dataset.embedding_matrix
        )
        for a, b in zip(again.instances, toy_dataset.instances):
            assert a.instance_id == b.instance_id
            assert a.doc_id == b.doc_id
            assert a.label == b.label
            assert a.difficult == b.difficult
            assert a.valid_len == b.valid_len
            np.testing.assert_array_equal(a.channel1, b.channel1)
            np.testing.assert_array_equal(a.channel2, b.channel2)
            np.testing.assert_array_equal(a.word_ids1, b.word_ids1)

    def test_rewrite_is_byte_identical(self, toy_dataset, tmp_path):
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_dataset(p1, toy_dataset)
        save_dataset(p2, toy_dataset)
        assert p1.read_bytes() == p2.read_bytes()

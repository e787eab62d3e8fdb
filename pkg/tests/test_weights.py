"""Tests for the VITW weight container and the TNSR tensor container."""
import struct
from dataclasses import replace

import numpy as np
import pytest

from core.errors import DataError
from core.models import ModelConfig
from core.tensor_io import decode_tensor, encode_tensor, load_tensor, save_tensor
from vit.encoder import init_random
from vit.weights import load_weights, read_weights, save_weights, write_weights

NUM_LAYERS_OFFSET = 8 + 4 * ModelConfig.FIELDS.index("num_layers")


class TestWeightContainer:
    def test_round_trip_is_bit_identical(self, toy_model):
        blob = save_weights(toy_model)
        loaded = load_weights(blob)
        assert loaded.config == toy_model.config
        for name in toy_model.params:
            np.testing.assert_array_equal(loaded.params[name], toy_model.params[name])
        assert save_weights(loaded) == blob

    def test_file_round_trip(self, toy_model, tmp_path):
        path = write_weights(tmp_path / "model" / "toy.vitw", toy_model)
        assert read_weights(path).fingerprint() == toy_model.fingerprint()

    def test_truncated_names_missing_tensor(self, toy_model):
        blob = save_weights(toy_model)
        with pytest.raises(DataError, match="head.bias"):
            load_weights(blob[:-10])

    def test_layer_count_mismatch(self, toy_config):
        three = replace(toy_config, num_layers=3)
        blob = bytearray(save_weights(init_random(three, 0)))
        struct.pack_into("<I", blob, NUM_LAYERS_OFFSET, 4)
        with pytest.raises(DataError, match="config declares 4 layer block"):
            load_weights(bytes(blob))

    def test_bad_magic(self, toy_model):
        blob = save_weights(toy_model)
        with pytest.raises(DataError, match="magic"):
            load_weights(b"XXXX" + blob[4:])

    def test_bad_version(self, toy_model):
        blob = bytearray(save_weights(toy_model))
        struct.pack_into("<I", blob, 4, 99)
        with pytest.raises(DataError, match="version 99"):
            load_weights(bytes(blob))

    def test_non_finite_value(self, toy_model):
        blob = save_weights(toy_model)
        poisoned = blob[:-8] + struct.pack("<d", float("nan"))
        with pytest.raises(DataError, match="non-finite"):
            load_weights(poisoned)

    def test_trailing_bytes(self, toy_model):
        with pytest.raises(DataError, match="trailing"):
            load_weights(save_weights(toy_model) + b"\x00" * 8)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            read_weights(tmp_path / "absent.vitw")


class TestTensorContainer:
    def test_round_trip(self, rng, tmp_path):
        array = rng.normal(size=(3, 4, 2))
        path = save_tensor(tmp_path / "t.tnsr", array)
        np.testing.assert_array_equal(load_tensor(path), array)
        assert encode_tensor(decode_tensor(path.read_bytes())) == path.read_bytes()

    def test_header_layout(self):
        blob = encode_tensor(np.zeros((2, 3)))
        assert blob[:4] == b"TNSR"
        assert struct.unpack_from("<4I", blob, 4) == (1, 2, 2, 3)
        assert len(blob) == 20 + 8 * 6

    def test_bad_magic(self):
        with pytest.raises(DataError, match="magic"):
            decode_tensor(b"NOPE" + encode_tensor(np.zeros(2))[4:])

    def test_payload_mismatch(self):
        with pytest.raises(DataError, match="payload size mismatch"):
            decode_tensor(encode_tensor(np.zeros((2, 2)))[:-8])

    def test_truncated_header(self):
        with pytest.raises(DataError, match="truncated"):
            decode_tensor(b"TNSR")

"""word2vec text/binary interchange formats."""

import struct

import numpy as np
import pytest

from semql.embedding.model import load_model, save_model
from semql.embedding.vocab import SENTINEL
from semql.errors import ConfigError, FormatError
from support import hand_model, unit


def sample_model():
    return hand_model(
        {
            "lion": unit(0.3, -0.1, 0.9, 0.2),
            "cheetah": unit(0.4, 0.0, 0.8, 0.1),
            "permit": unit(-0.5, 0.5, 0.1, 0.7),
        },
        normalized=True,
    )


class TestRoundTrips:
    def test_text_round_trip_close(self, tmp_path):
        model = sample_model()
        path = tmp_path / "model.txt"
        save_model(model, path, "word2vec_text")
        loaded = load_model(path, "word2vec_text")
        assert loaded.tokens == model.tokens
        assert np.allclose(loaded.vectors, model.vectors, atol=1e-6)

    def test_binary_round_trip_exact(self, tmp_path):
        model = sample_model()
        path = tmp_path / "model.bin"
        save_model(model, path, "word2vec_binary")
        loaded = load_model(path, "word2vec_binary")
        assert loaded.tokens == model.tokens
        assert np.array_equal(loaded.vectors, model.vectors)
        assert loaded.vectors.dtype == np.float32

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            save_model(sample_model(), tmp_path / "m", "pickle")
        with pytest.raises(ConfigError):
            load_model(tmp_path / "m", "pickle")


class TestTextFormat:
    def test_header_echoes_counts(self, tmp_path):
        path = tmp_path / "tiny.txt"
        path.write_text(
            "3 4\n"
            "</s> 0.5 0.5 0.5 0.5\n"
            "lion 1 0 0 0\n"
            "tiger 0 1 0 0\n",
            encoding="utf-8",
        )
        model = load_model(path, "word2vec_text")
        assert len(model) == 3
        assert model.dim == 4

    def test_missing_sentinel_appended(self, tmp_path):
        path = tmp_path / "foreign.txt"
        path.write_text("2 4\nlion 1 0 0 0\ntiger 0 1 0 0\n", encoding="utf-8")
        model = load_model(path, "word2vec_text")
        assert len(model) == 3
        assert SENTINEL in model
        assert np.allclose(model.sentinel_vector, np.full(4, 0.5))

    def test_short_file_reports_byte_offset(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("5 4\nlion 1 0 0 0\n", encoding="utf-8")
        with pytest.raises(FormatError) as err:
            load_model(path, "word2vec_text")
        assert "byte offset" in str(err.value)

    def test_wrong_component_count_rejected(self, tmp_path):
        path = tmp_path / "ragged.txt"
        path.write_text("1 4\nlion 1 0 0\n", encoding="utf-8")
        with pytest.raises(FormatError):
            load_model(path, "word2vec_text")

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "header.txt"
        path.write_text("lion 1 0 0 0\n", encoding="utf-8")
        with pytest.raises(FormatError):
            load_model(path, "word2vec_text")


class TestBinaryFormat:
    def test_layout_is_token_space_floats_newline(self, tmp_path):
        model = hand_model({"lion": unit(1.0, 0.0)}, normalized=True)
        path = tmp_path / "model.bin"
        save_model(model, path, "word2vec_binary")
        blob = path.read_bytes()
        header, rest = blob.split(b"\n", 1)
        assert header == b"2 2"
        # first record is the sentinel
        assert rest.startswith(SENTINEL.encode() + b" ")
        floats = rest[len(SENTINEL) + 1 : len(SENTINEL) + 1 + 8]
        values = struct.unpack("<2f", floats)
        assert values == pytest.approx([1 / np.sqrt(2)] * 2)
        assert blob.endswith(b"\n")

    def test_truncated_payload_reports_byte_offset(self, tmp_path):
        model = sample_model()
        path = tmp_path / "model.bin"
        save_model(model, path, "word2vec_binary")
        clipped = tmp_path / "clipped.bin"
        clipped.write_bytes(path.read_bytes()[:-6])
        with pytest.raises(FormatError) as err:
            load_model(clipped, "word2vec_binary")
        assert "byte offset" in str(err.value)

    def test_missing_sentinel_appended(self, tmp_path):
        path = tmp_path / "foreign.bin"
        with open(path, "wb") as fh:
            fh.write(b"1 2\n")
            fh.write(b"lion " + struct.pack("<2f", 1.0, 0.0) + b"\n")
        model = load_model(path, "word2vec_binary")
        assert SENTINEL in model
        assert len(model) == 2

"""Binary parameter-snapshot format."""

import json
import struct

import numpy as np
import pytest

from replaygraph.linear import LinearModel
from replaygraph.mlp import MlpModel
from replaygraph.snapshots import (SnapshotFormatError, read_snapshot,
                                   write_snapshot)


class TestRoundTrip:
    def test_named_arrays_survive(self, tmp_path, rng):
        arrays = {"weights": rng.standard_normal((3, 4)),
                  "bias": rng.standard_normal(3)}
        path = tmp_path / "model.snap"
        write_snapshot(path, arrays)
        back = read_snapshot(path)
        assert set(back) == {"weights", "bias"}
        assert np.array_equal(back["weights"], arrays["weights"])
        assert back["bias"].shape == (3,)

    def test_linear_model_round_trips(self, tmp_path, rng):
        model = LinearModel.zeros(3, 5, active_classes=(0, 1, 2))
        model.set_flat(rng.standard_normal(model.num_params))
        path = tmp_path / "linear.snap"
        write_snapshot(path, model.to_arrays())
        restored = model.with_arrays(read_snapshot(path))
        assert np.array_equal(restored.get_flat(), model.get_flat())

    def test_mlp_round_trips(self, tmp_path):
        model = MlpModel.init(input_dim=6, hidden_dim=4, class_count=3, seed=2)
        path = tmp_path / "mlp.snap"
        write_snapshot(path, model.to_arrays())
        restored = model.with_arrays(read_snapshot(path))
        assert np.array_equal(restored.get_flat(), model.get_flat())

    def test_scalar_shaped_and_empty_mapping(self, tmp_path):
        path = tmp_path / "odd.snap"
        write_snapshot(path, {"x": np.array(2.5)})
        assert read_snapshot(path)["x"] == 2.5
        write_snapshot(path, {})
        assert read_snapshot(path) == {}

    def test_writes_are_deterministic(self, tmp_path):
        arrays = {"a": np.arange(6.0).reshape(2, 3)}
        p1, p2 = tmp_path / "one.snap", tmp_path / "two.snap"
        write_snapshot(p1, arrays)
        write_snapshot(p2, arrays)
        assert p1.read_bytes() == p2.read_bytes()


class TestFormatErrors:
    def test_truncated_header_length(self, tmp_path):
        path = tmp_path / "short.snap"
        path.write_bytes(b"\x01\x02")
        with pytest.raises(SnapshotFormatError, match="truncated header length"):
            read_snapshot(path)

    def test_truncated_header_body(self, tmp_path):
        path = tmp_path / "cut.snap"
        path.write_bytes(struct.pack("<I", 100) + b"{}")
        with pytest.raises(SnapshotFormatError, match="truncated header"):
            read_snapshot(path)

    def test_unsupported_version(self, tmp_path):
        header = json.dumps({"version": 99, "dtype": "<f8", "fields": []}).encode()
        path = tmp_path / "future.snap"
        path.write_bytes(struct.pack("<I", len(header)) + header)
        with pytest.raises(SnapshotFormatError, match="unsupported version 99"):
            read_snapshot(path)

    def test_data_shorter_than_shapes(self, tmp_path):
        header = json.dumps({"version": 1, "dtype": "<f8",
                             "fields": [["a", [4]]]}).encode()
        path = tmp_path / "short_data.snap"
        path.write_bytes(struct.pack("<I", len(header)) + header
                         + np.zeros(2, dtype="<f8").tobytes())
        with pytest.raises(SnapshotFormatError, match="shorter than declared"):
            read_snapshot(path)

    def test_trailing_values_rejected(self, tmp_path):
        header = json.dumps({"version": 1, "dtype": "<f8",
                             "fields": [["a", [1]]]}).encode()
        path = tmp_path / "extra.snap"
        path.write_bytes(struct.pack("<I", len(header)) + header
                         + np.zeros(3, dtype="<f8").tobytes())
        with pytest.raises(SnapshotFormatError, match="2 trailing values"):
            read_snapshot(path)

import numpy as np
import pytest

from syntaxprobe.errors import FeatureFormatError, ManifestError
from syntaxprobe.featurestore import (
    HEADER_SIZE,
    MAGIC,
    Manifest,
    expected_frame_count,
    read_all_layers,
    read_feature_header,
    read_layer,
    read_layer_file,
    validate_feature_file,
    write_feature_file,
    write_features,
)

CONV_STACK = ((10, 5), (3, 2), (3, 2), (3, 2), (3, 2), (2, 2), (2, 2))


def conv_frames(n_samples: int) -> int:
    """Independent oracle: frame count through the encoder's convolutional stack."""
    n = n_samples
    for kernel, stride in CONV_STACK:
        n = (n - kernel) // stride + 1
    return n


class TestFileFormat:
    def test_size_formula(self, tmp_path):
        path = tmp_path / "z.spb"
        write_feature_file(path, np.zeros((1, 2, 3), dtype=np.float32))
        assert path.stat().st_size == HEADER_SIZE + 4 * 1 * 2 * 3 == 44

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        for i in range(10):
            shape = tuple(rng.integers(1, 7, size=3))
            data = rng.normal(size=shape).astype(np.float32)
            path = tmp_path / f"f{i}.spb"
            write_feature_file(path, data)
            back = read_all_layers(path)
            assert back.tobytes() == data.tobytes()
            for layer in range(shape[0]):
                assert read_layer_file(path, layer).tobytes() == data[layer].tobytes()

    def test_nan_rejected(self, tmp_path):
        data = np.zeros((1, 1, 2), dtype=np.float32)
        data[0, 0, 0] = np.nan
        with pytest.raises(FeatureFormatError, match="finite"):
            write_feature_file(tmp_path / "bad.spb", data)

    def test_bad_magic_names_file(self, tmp_path):
        path = tmp_path / "corrupt.spb"
        write_feature_file(path, np.zeros((1, 1, 1), dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(FeatureFormatError, match="corrupt.spb.*magic"):
            read_feature_header(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "short.spb"
        write_feature_file(path, np.zeros((2, 3, 4), dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(FeatureFormatError, match="size"):
            read_feature_header(path)

    def test_layer_out_of_range(self, tmp_path):
        path = tmp_path / "f.spb"
        write_feature_file(path, np.zeros((2, 1, 1), dtype=np.float32))
        with pytest.raises(FeatureFormatError, match="out of range"):
            read_layer_file(path, 2)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "v9.spb"
        write_feature_file(path, np.zeros((1, 1, 1), dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(FeatureFormatError, match="version"):
            read_feature_header(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FeatureFormatError, match="not found"):
            read_feature_header(tmp_path / "ghost.spb")

    def test_validate_rejects_smuggled_nan(self, tmp_path):
        path = tmp_path / "f.spb"
        write_feature_file(path, np.zeros((1, 1, 2), dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[HEADER_SIZE:HEADER_SIZE + 4] = np.float32("nan").tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(FeatureFormatError, match="non-finite"):
            validate_feature_file(path)
        assert raw[:4] == MAGIC


class TestExpectedFrameCount:
    def test_one_second_default_grid(self):
        assert expected_frame_count(1.0, 0.02, 0.025) == 49

    def test_half_second(self):
        assert expected_frame_count(0.5, 0.02, 0.025) == 24

    def test_duration_equals_window(self):
        assert expected_frame_count(0.025, 0.02, 0.025) == 1

    def test_too_short_warns_and_returns_zero(self):
        with pytest.warns(UserWarning, match="shorter"):
            assert expected_frame_count(0.01, 0.02, 0.025) == 0

    @pytest.mark.parametrize("samples", [16000, 8000])
    def test_matches_encoder_conv_stack(self, samples):
        # The 20 ms hop / 25 ms window grid mirrors the encoder's conv
        # stack (stride 320, receptive field 400 samples at 16 kHz).
        duration = samples / 16000
        assert expected_frame_count(duration, 0.02, 0.025) == conv_frames(samples)

    def test_invalid_grid(self):
        with pytest.raises(ValueError):
            expected_frame_count(1.0, 0.0, 0.025)


class TestManifest:
    def test_write_features_registers_entry(self, tmp_path):
        manifest = Manifest(tmp_path / "feats")
        data = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
        write_features(manifest, "utt/1", data, duration_s=0.08)
        entry = manifest.entry("utt/1")
        assert entry.layer_count == 2 and entry.dim == 4
        assert (tmp_path / "feats" / entry.path).exists()
        assert np.array_equal(read_layer(manifest, "utt/1", 1), data[1])

    def test_manifest_round_trip(self, tmp_path):
        manifest = Manifest(tmp_path / "feats")
        write_features(manifest, "a", np.zeros((1, 2, 2), dtype=np.float32), duration_s=0.06)
        write_features(manifest, "b", np.ones((1, 2, 2), dtype=np.float32), duration_s=0.06)
        loaded = Manifest.load(tmp_path / "feats" / "manifest.json")
        assert set(loaded.entries) == {"a", "b"}
        assert loaded.entry("a") == manifest.entry("a")
        assert loaded.common_layer_count() == 1

    def test_missing_entry(self, tmp_path):
        manifest = Manifest(tmp_path)
        with pytest.raises(ManifestError, match="ghost"):
            manifest.entry("ghost")

    def test_missing_manifest_file(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            Manifest.load(tmp_path / "manifest.json")

    def test_heterogeneous_layer_count(self, tmp_path):
        manifest = Manifest(tmp_path / "feats")
        write_features(manifest, "a", np.zeros((1, 2, 2), dtype=np.float32), duration_s=0.06)
        write_features(manifest, "b", np.zeros((2, 2, 2), dtype=np.float32), duration_s=0.06)
        with pytest.raises(ManifestError, match="disagree"):
            manifest.common_layer_count()

    def test_layer_range_checked_against_entry(self, tmp_path):
        manifest = Manifest(tmp_path / "feats")
        write_features(manifest, "a", np.zeros((2, 2, 2), dtype=np.float32), duration_s=0.06)
        with pytest.raises(FeatureFormatError, match="out of range"):
            read_layer(manifest, "a", 5)

    def test_bad_hop_rejected(self, tmp_path):
        manifest = Manifest(tmp_path / "feats")
        with pytest.raises(ManifestError):
            write_features(manifest, "a", np.zeros((1, 1, 1), dtype=np.float32),
                           duration_s=0.06, hop_s=0.0)

import numpy as np
import pytest
from scipy.io import wavfile

from syntaxprobe_extractor.audio import (
    AudioError,
    AudioItem,
    load_wav,
    parse_audio_list,
    resample,
)

from conftest import write_audio_list, write_wav


class TestAudioList:
    def test_two_and_three_column_rows(self, tmp_path):
        path = write_audio_list(tmp_path / "list.tsv", [
            ("/data/a.wav", "utt-a"),
            ("/data/b.wav", "utt-b", 16000),
        ])
        items = parse_audio_list(path)
        assert items[0] == AudioItem(path=items[0].path, utterance_id="utt-a", sample_rate=None)
        assert items[1].sample_rate == 16000

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "list.tsv"
        path.write_text("# header\n\n/x.wav\tu1\n", encoding="utf-8")
        assert len(parse_audio_list(path)) == 1

    def test_duplicate_id_rejected(self, tmp_path):
        path = write_audio_list(tmp_path / "l.tsv", [("/a.wav", "u"), ("/b.wav", "u")])
        with pytest.raises(AudioError, match="duplicate"):
            parse_audio_list(path)

    def test_wrong_columns(self, tmp_path):
        path = tmp_path / "l.tsv"
        path.write_text("just-one-column\n", encoding="utf-8")
        with pytest.raises(AudioError, match="expected"):
            parse_audio_list(path)

    def test_empty_list(self, tmp_path):
        path = tmp_path / "l.tsv"
        path.write_text("# nothing\n", encoding="utf-8")
        with pytest.raises(AudioError, match="empty"):
            parse_audio_list(path)


class TestLoadWav:
    def test_int16_scaled_to_unit_range(self, tmp_path):
        path = write_wav(tmp_path / "a.wav", 0.1)
        samples, rate = load_wav(AudioItem(path, "a"))
        assert rate == 16000
        assert samples.dtype == np.float32
        assert np.abs(samples).max() <= 1.0

    def test_stereo_downmixed(self, tmp_path):
        rng = np.random.default_rng(0)
        data = (rng.uniform(-0.2, 0.2, size=(1600, 2)) * 32767).astype(np.int16)
        wavfile.write(tmp_path / "st.wav", 16000, data)
        samples, _ = load_wav(AudioItem(tmp_path / "st.wav", "st"))
        assert samples.ndim == 1
        assert len(samples) == 1600

    def test_declared_rate_mismatch(self, tmp_path):
        path = write_wav(tmp_path / "a.wav", 0.1, rate=8000)
        with pytest.raises(AudioError, match="8000"):
            load_wav(AudioItem(path, "a", sample_rate=16000))

    def test_missing_file(self, tmp_path):
        with pytest.raises(AudioError, match="not found"):
            load_wav(AudioItem(tmp_path / "ghost.wav", "g"))


class TestResample:
    def test_8k_to_16k_doubles_length(self):
        samples = np.sin(np.linspace(0, 100, 8000)).astype(np.float32)
        out = resample(samples, 8000, 16000)
        assert len(out) == 16000
        assert out.dtype == np.float32

    def test_same_rate_is_identity(self):
        samples = np.zeros(100, dtype=np.float32)
        assert resample(samples, 16000, 16000) is samples

import pytest

from extractor_bridge.manifest import ExtractManifest, ManifestError, read_manifest_tsv


def touch_wavs(tmp_path, names):
    paths = {}
    for name in names:
        p = tmp_path / f"{name}.wav"
        p.write_bytes(b"RIFF")
        paths[name] = p
    return paths


class TestManifest:
    def test_parse_tsv(self, tmp_path):
        paths = touch_wavs(tmp_path, ["a", "b"])
        tsv = tmp_path / "m.tsv"
        tsv.write_text(f"# comment\nu1\t{paths['a']}\nu2\t{paths['b']}\n")
        manifest = read_manifest_tsv(tsv, "ecapa", tmp_path / "out.semb")
        assert [u for u, _ in manifest.entries] == ["u1", "u2"]
        assert manifest.model == "ecapa"

    def test_wrong_field_count(self, tmp_path):
        tsv = tmp_path / "m.tsv"
        tsv.write_text("u1 only-one-field\n")
        with pytest.raises(ManifestError, match="2 tab-separated"):
            read_manifest_tsv(tsv, "ecapa", tmp_path / "out.semb")

    def test_duplicate_id(self, tmp_path):
        paths = touch_wavs(tmp_path, ["a"])
        tsv = tmp_path / "m.tsv"
        tsv.write_text(f"u1\t{paths['a']}\nu1\t{paths['a']}\n")
        with pytest.raises(ManifestError, match="duplicate"):
            read_manifest_tsv(tsv, "redimnet", tmp_path / "out.semb")

    def test_missing_audio_file(self, tmp_path):
        tsv = tmp_path / "m.tsv"
        tsv.write_text(f"u1\t{tmp_path / 'ghost.wav'}\n")
        with pytest.raises(ManifestError, match="not found"):
            read_manifest_tsv(tsv, "ssl-aasist", tmp_path / "out.semb")

    def test_unknown_model(self, tmp_path):
        manifest = ExtractManifest(entries=[], model="whisper", out_path=tmp_path / "o")
        with pytest.raises(ManifestError, match="whisper"):
            manifest.validate()

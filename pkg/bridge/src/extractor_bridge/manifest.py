"""Extraction manifests: which utterances to embed, with which model."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

MODEL_NAMES = ("ecapa", "redimnet", "ssl-aasist")


class ManifestError(ValueError):
    pass


@dataclass
class ExtractManifest:
    entries: list[tuple[str, Path]]  # (utterance id, audio path)
    model: str
    out_path: Path

    def validate(self) -> None:
        if self.model not in MODEL_NAMES:
            raise ManifestError(f"unknown model {self.model!r} (known: {MODEL_NAMES})")
        seen = set()
        for utt_id, audio in self.entries:
            if not utt_id:
                raise ManifestError("empty utterance id")
            if utt_id in seen:
                raise ManifestError(f"duplicate utterance id {utt_id!r}")
            seen.add(utt_id)
            if not Path(audio).is_file():
                raise ManifestError(f"audio file not found for {utt_id!r}: {audio}")


def read_manifest_tsv(path, model: str, out_path) -> ExtractManifest:
    """Parse `id \\t audio_path` rows; '#' lines are comments."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if line == "" or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ManifestError(
                    f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}"
                )
            utt_id, audio = fields
            entries.append((utt_id, Path(audio)))
    manifest = ExtractManifest(entries=entries, model=model, out_path=Path(out_path))
    manifest.validate()
    return manifest

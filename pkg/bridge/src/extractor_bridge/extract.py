"""Run an embedder over a manifest and emit an SEMB v1 file."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioDecodeError, load_wav, resample_linear
from .manifest import ExtractManifest
from .models import Embedder, load_model
from .sembfile import write_semb

log = logging.getLogger("extractor_bridge")


@dataclass
class ExtractResult:
    out_path: Path
    dim: int
    written: int
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (id, reason)


def extract(manifest: ExtractManifest, embedder: Embedder | None = None,
            checkpoint=None, device: str = "cpu") -> ExtractResult:
    """Embed every manifest row and write the store atomically.

    Undecodable audio is skipped with a logged warning and excluded from
    the output; a missing model checkpoint is fatal (raised by the loader
    before any audio is touched).
    """
    manifest.validate()
    if embedder is None:
        embedder = load_model(manifest.model, checkpoint=checkpoint, device=device)

    entries: list[tuple[str, np.ndarray]] = []
    skipped: list[tuple[str, str]] = []
    for utt_id, audio_path in manifest.entries:
        try:
            samples, rate = load_wav(audio_path)
        except AudioDecodeError as exc:
            log.warning("skipping %r: %s", utt_id, exc)
            skipped.append((utt_id, str(exc)))
            continue
        if embedder.expected_rate is not None and rate != embedder.expected_rate:
            samples = resample_linear(samples, rate, embedder.expected_rate)
            rate = embedder.expected_rate
        vec = np.asarray(embedder.embed(samples, rate), dtype=np.float32).reshape(-1)
        if vec.shape[0] != embedder.dim:
            raise ValueError(
                f"{manifest.model}: embedding for {utt_id!r} has {vec.shape[0]} "
                f"values, model declares {embedder.dim}"
            )
        entries.append((utt_id, vec))

    write_semb(entries, embedder.dim, manifest.out_path)
    _write_sidecar(manifest, embedder, len(entries), skipped)
    return ExtractResult(
        out_path=Path(manifest.out_path),
        dim=embedder.dim,
        written=len(entries),
        skipped=skipped,
    )


def _write_sidecar(manifest, embedder, written, skipped) -> None:
    # Records the preprocessing actually applied, next to the store.
    meta = {
        "model": embedder.name,
        "dim": embedder.dim,
        "audio": {
            "container": "PCM WAV via stdlib wave",
            "channels": "averaged to mono",
            "sample_rate": embedder.expected_rate or "as stored",
            "resampling": "linear interpolation when rates differ",
        },
        "written": written,
        "skipped": [{"id": utt, "reason": reason} for utt, reason in skipped],
    }
    Path(str(manifest.out_path) + ".meta.json").write_text(
        json.dumps(meta, indent=2) + "\n", encoding="utf-8"
    )

"""Independent SEMB v1 reader/writer/verifier.

This module deliberately re-implements the format from its byte-level
definition rather than importing the consumer toolkit, so the two sides
cross-validate each other:

    "SEMB" | u32 version=1 | u32 dim | u64 count |
    count records of: u16 id-byte-length | UTF-8 id | dim x f32
    (all integers little-endian)
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SEMB"
VERSION = 1


class SembWriteError(ValueError):
    pass


def write_semb(entries: list[tuple[str, np.ndarray]], dim: int, path) -> None:
    """Write (id, vector) pairs atomically (temp file + rename)."""
    path = Path(path)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<IIQ", VERSION, dim, len(entries))
    seen = set()
    for utt_id, vec in entries:
        if not utt_id:
            raise SembWriteError("empty utterance id")
        if utt_id in seen:
            raise SembWriteError(f"duplicate utterance id {utt_id!r}")
        seen.add(utt_id)
        ident = utt_id.encode("utf-8")
        if len(ident) > 0xFFFF:
            raise SembWriteError(f"utterance id too long: {utt_id[:32]!r}...")
        arr = np.asarray(vec, dtype="<f4").reshape(-1)
        if arr.shape[0] != dim:
            raise SembWriteError(
                f"vector for {utt_id!r} has {arr.shape[0]} values, expected {dim}"
            )
        if not np.all(np.isfinite(arr)):
            raise SembWriteError(f"non-finite value in vector for {utt_id!r}")
        blob += struct.pack("<H", len(ident)) + ident + arr.tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".semb.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(bytes(blob))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_semb(path) -> tuple[int, list[tuple[str, np.ndarray]]]:
    """Strict parse; raises ValueError on the first violation."""
    report = verify_semb(path)
    if not report.ok:
        first = report.violations[0]
        raise ValueError(f"{path}: byte {first.offset}: {first.message}")
    raw = Path(path).read_bytes()
    entries = []
    pos = 20
    dim = report.dim
    for _ in range(report.count):
        (id_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        utt_id = raw[pos : pos + id_len].decode("utf-8")
        pos += id_len
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos).copy()
        pos += 4 * dim
        entries.append((utt_id, vec))
    return dim, entries


@dataclass
class Violation:
    offset: int
    message: str


@dataclass
class SembReport:
    path: str
    dim: int | None = None
    count: int | None = None
    records_parsed: int = 0
    all_finite: bool = True
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return (
                f"{self.path}: ok (dim={self.dim}, count={self.count}, "
                f"finite={'yes' if self.all_finite else 'no'})"
            )
        lines = [f"{self.path}: {len(self.violations)} violation(s)"]
        lines += [f"  byte {v.offset}: {v.message}" for v in self.violations]
        return "\n".join(lines)


def verify_semb(path) -> SembReport:
    """Conformance check of one file; every violation carries its byte offset.

    Structural violations (bad magic, truncation) stop the walk; value-level
    violations (non-finite values, duplicate or empty ids) are collected and
    the walk continues.
    """
    report = SembReport(path=str(path))
    raw = Path(path).read_bytes()

    def structural(offset, message):
        report.violations.append(Violation(offset, message))
        return report

    if len(raw) < 20:
        return structural(0, f"file is {len(raw)} bytes, header needs 20")
    if raw[:4] != MAGIC:
        return structural(0, f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version, dim, count = struct.unpack_from("<IIQ", raw, 4)
    if version != VERSION:
        return structural(4, f"unsupported version {version}")
    if dim < 1:
        return structural(8, f"dim must be positive, got {dim}")
    report.dim = dim
    report.count = count

    pos = 20
    seen: set[str] = set()
    for i in range(count):
        if pos + 2 > len(raw):
            return structural(pos, f"truncated reading record {i} id length")
        (id_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        if pos + id_len > len(raw):
            return structural(pos, f"truncated reading record {i} id ({id_len} bytes)")
        id_offset = pos
        try:
            utt_id = raw[pos : pos + id_len].decode("utf-8")
        except UnicodeDecodeError:
            report.violations.append(Violation(id_offset, f"record {i} id is not valid UTF-8"))
            utt_id = None
        pos += id_len
        if utt_id == "":
            report.violations.append(Violation(id_offset, f"record {i} has an empty id"))
        elif utt_id is not None and utt_id in seen:
            report.violations.append(Violation(id_offset, f"record {i} duplicates id {utt_id!r}"))
        elif utt_id is not None:
            seen.add(utt_id)
        if pos + 4 * dim > len(raw):
            return structural(pos, f"truncated reading record {i} values")
        values = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos)
        if not np.all(np.isfinite(values)):
            bad = int(np.argmin(np.isfinite(values)))
            report.violations.append(
                Violation(pos + 4 * bad, f"record {i} value {bad} is not finite")
            )
            report.all_finite = False
        pos += 4 * dim
        report.records_parsed += 1
    if pos != len(raw):
        return structural(pos, f"{len(raw) - pos} trailing bytes after last record")
    return report

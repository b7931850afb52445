"""On-disk formats: embedding stores, trial lists, score files, checkpoints.

SEMB v1 embedding file (little-endian throughout):
    "SEMB" | u32 version=1 | u32 dim | u64 count |
    count records of: u16 id-byte-length | id bytes (UTF-8) | dim x f32

SMDL v1 checkpoint:
    "SMDL" | u32 version=1 |
    u32 metadata-count | entries of: u16 keylen | key | u32 vallen | value |
    u32 tensor-count   | tensors of: u16 namelen | name | u32 ndim |
                         ndim x u32 dims | row-major f32 data

Trial list: "<enrol_id> <test_id> <label>\\n" with single spaces, label in
{target, nontarget, spoof}; lines beginning '#' are ignored.

Score file: "<enrol_id>\\t<test_id>\\t<score %.6f>\\n".

Vectors and tensors are stored as float32 and upcast to float64 on load,
so a write/read round trip is bit-identical while all in-memory
arithmetic stays 64-bit. Every malformed input raises a typed error.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import TENSOR_FIELDS, ModelParams

LABELS = ("target", "nontarget", "spoof")

SEMB_MAGIC = b"SEMB"
SEMB_VERSION = 1
SMDL_MAGIC = b"SMDL"
SMDL_VERSION = 1

SCORE_DECIMALS = 6

# Metadata every checkpoint must carry.
REQUIRED_METADATA = ("format_version", "d_asv", "d_cm", "h1", "h2", "rho_mode")


class FormatError(ValueError):
    """A file violates its on-disk format contract."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class DuplicateIdError(FormatError):
    pass


class NonFiniteValueError(FormatError):
    pass


class TrialParseError(FormatError):
    pass


class ScoreParseError(FormatError):
    pass


class ShapeMismatchError(FormatError):
    pass


class MissingTensorError(FormatError):
    pass


class MissingEmbeddingError(KeyError):
    """A trial references an utterance id absent from the store."""


class EmbeddingStore:
    """Ordered utterance-id -> fixed-dimension vector map.

    Vectors are quantized to float32 on insertion (the file precision) and
    held as exact float64 upcasts, making round trips bit-identical.
    """

    def __init__(self, dim: int):
        if int(dim) < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = int(dim)
        self._entries: dict[str, np.ndarray] = {}

    def add(self, utt_id: str, vector) -> None:
        if not isinstance(utt_id, str) or not utt_id:
            raise FormatError("utterance id must be a non-empty string")
        if len(utt_id.encode("utf-8")) > 0xFFFF:
            raise FormatError(f"utterance id exceeds 65535 UTF-8 bytes: {utt_id[:32]!r}...")
        if utt_id in self._entries:
            raise DuplicateIdError(f"duplicate utterance id {utt_id!r}")
        vec = np.asarray(vector, dtype=np.float32).reshape(-1)
        if vec.shape[0] != self.dim:
            raise ShapeMismatchError(
                f"vector for {utt_id!r} has {vec.shape[0]} components, expected {self.dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise NonFiniteValueError(f"non-finite value in vector for {utt_id!r}")
        out = vec.astype(np.float64)
        out.flags.writeable = False
        self._entries[utt_id] = out

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, utt_id: str) -> bool:
        return utt_id in self._entries

    def ids(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def get(self, utt_id: str) -> np.ndarray:
        try:
            return self._entries[utt_id]
        except KeyError:
            raise MissingEmbeddingError(f"no embedding for utterance id {utt_id!r}") from None

    def matrix(self, utt_ids) -> np.ndarray:
        """Stack embeddings for the given ids into an (n, dim) array."""
        return np.stack([self.get(u) for u in utt_ids]) if utt_ids else np.empty((0, self.dim))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.dim == other.dim
            and list(self._entries) == list(other._entries)
            and all(np.array_equal(v, other._entries[k]) for k, v in self._entries.items())
        )


class _Cursor:
    """Byte reader that reports offsets on truncation."""

    def __init__(self, data: bytes, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"{self.path}: truncated while reading {what} at byte {self.pos} "
                f"(need {n}, have {len(self.data) - self.pos})"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos


def write_embeddings(store: EmbeddingStore, path) -> None:
    """Serialize a store to SEMB v1; output bytes are a pure function of the store."""
    out = bytearray()
    out += SEMB_MAGIC
    out += struct.pack("<IIQ", SEMB_VERSION, store.dim, len(store))
    for utt_id, vec in store.items():
        ident = utt_id.encode("utf-8")
        out += struct.pack("<H", len(ident))
        out += ident
        out += vec.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def read_embeddings(path) -> EmbeddingStore:
    """Parse an SEMB v1 file; entries keep file order."""
    cur = _Cursor(Path(path).read_bytes(), path)
    magic = cur.take(4, "magic")
    if magic != SEMB_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {SEMB_MAGIC!r}")
    version, dim, count = struct.unpack("<IIQ", cur.take(16, "header"))
    if version != SEMB_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported SEMB version {version}")
    if dim < 1:
        raise FormatError(f"{path}: dim must be positive, got {dim}")
    store = EmbeddingStore(dim)
    for i in range(count):
        (id_len,) = struct.unpack("<H", cur.take(2, f"record {i} id length"))
        raw_id = cur.take(id_len, f"record {i} id")
        try:
            utt_id = raw_id.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: record {i} id is not valid UTF-8") from exc
        if not utt_id:
            raise FormatError(f"{path}: record {i} has an empty utterance id")
        values = np.frombuffer(cur.take(4 * dim, f"record {i} values"), dtype="<f4")
        store.add(utt_id, values)
    if cur.remaining:
        raise FormatError(f"{path}: {cur.remaining} trailing bytes after last record")
    return store


@dataclass(frozen=True)
class TrialRecord:
    enrol_id: str
    test_id: str
    label: str

    def is_positive(self) -> bool:
        """Positive SASV trial: target speaker and bonafide speech."""
        return self.label == "target"


def read_trials(path) -> list[TrialRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if line == "" or line.startswith("#"):
                continue
            fields = line.split(" ")
            if len(fields) != 3:
                raise TrialParseError(
                    f"{path}:{lineno}: expected 3 space-separated fields, got {len(fields)}"
                )
            enrol_id, test_id, label = fields
            if not enrol_id or not test_id:
                raise TrialParseError(f"{path}:{lineno}: empty utterance id")
            if label not in LABELS:
                raise TrialParseError(
                    f"{path}:{lineno}: unknown label {label!r} (expected one of {LABELS})"
                )
            records.append(TrialRecord(enrol_id, test_id, label))
    return records


def _check_plain_id(utt_id: str, where: str) -> None:
    if not utt_id:
        raise FormatError(f"{where}: empty utterance id")
    if any(c in utt_id for c in " \t\r\n"):
        raise FormatError(f"{where}: id {utt_id!r} contains whitespace")


def write_trials(trials, path) -> None:
    lines = []
    for t in trials:
        _check_plain_id(t.enrol_id, "trial list")
        _check_plain_id(t.test_id, "trial list")
        if t.enrol_id.startswith("#"):
            raise FormatError(f"trial list: id {t.enrol_id!r} would parse as a comment")
        if t.label not in LABELS:
            raise FormatError(f"trial list: unknown label {t.label!r}")
        lines.append(f"{t.enrol_id} {t.test_id} {t.label}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


@dataclass(frozen=True)
class ScoreRecord:
    enrol_id: str
    test_id: str
    label: str | None
    score: float


@dataclass
class ScoreSet:
    """Per-trial scalar scores; labels present when the source had them."""

    records: list[ScoreRecord]

    def __len__(self) -> int:
        return len(self.records)

    def scores(self) -> np.ndarray:
        return np.array([r.score for r in self.records], dtype=np.float64)

    def labels(self) -> list[str | None]:
        return [r.label for r in self.records]

    def by_label(self) -> dict[str, np.ndarray]:
        """Scores grouped by class; requires every record to be labeled."""
        groups: dict[str, list[float]] = {}
        for r in self.records:
            if r.label is None:
                raise ValueError(
                    f"score for ({r.enrol_id!r}, {r.test_id!r}) has no label"
                )
            groups.setdefault(r.label, []).append(r.score)
        return {k: np.array(v, dtype=np.float64) for k, v in groups.items()}

    @classmethod
    def from_trials(cls, trials, scores) -> "ScoreSet":
        scores = np.asarray(scores, dtype=np.float64)
        if len(trials) != scores.shape[0]:
            raise ValueError(f"{len(trials)} trials but {scores.shape[0]} scores")
        return cls(
            [
                ScoreRecord(t.enrol_id, t.test_id, t.label, float(s))
                for t, s in zip(trials, scores)
            ]
        )


def write_scores(scores: ScoreSet, path) -> None:
    lines = []
    for r in scores.records:
        _check_plain_id(r.enrol_id, "score file")
        _check_plain_id(r.test_id, "score file")
        if not np.isfinite(r.score):
            raise NonFiniteValueError(
                f"score file: non-finite score for ({r.enrol_id!r}, {r.test_id!r})"
            )
        lines.append(f"{r.enrol_id}\t{r.test_id}\t{r.score:.{SCORE_DECIMALS}f}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_scores(path) -> ScoreSet:
    """Parse a score file. Labels are unknown (None) until joined with trials."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if line == "":
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ScoreParseError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                )
            enrol_id, test_id, raw = fields
            if not enrol_id or not test_id:
                raise ScoreParseError(f"{path}:{lineno}: empty utterance id")
            try:
                score = float(raw)
            except ValueError:
                raise ScoreParseError(f"{path}:{lineno}: bad score {raw!r}") from None
            if not np.isfinite(score):
                raise ScoreParseError(f"{path}:{lineno}: non-finite score {raw!r}")
            records.append(ScoreRecord(enrol_id, test_id, None, score))
    return ScoreSet(records)


def join_scores_with_trials(scores: ScoreSet, trials) -> ScoreSet:
    """Attach labels from a trial list, keyed by (enrol_id, test_id).

    Missing, extra, or duplicated pairs are errors naming the pair.
    """
    labels: dict[tuple[str, str], str] = {}
    for t in trials:
        key = (t.enrol_id, t.test_id)
        if key in labels:
            raise ValueError(f"trial pair {key} appears more than once in the trial list")
        labels[key] = t.label
    seen = set()
    joined = []
    for r in scores.records:
        key = (r.enrol_id, r.test_id)
        if key in seen:
            raise ValueError(f"score pair {key} appears more than once in the score file")
        seen.add(key)
        if key not in labels:
            raise ValueError(f"score pair {key} has no matching trial")
        joined.append(ScoreRecord(r.enrol_id, r.test_id, labels[key], r.score))
    if len(seen) != len(labels):
        missing = next(k for k in labels if k not in seen)
        raise ValueError(f"trial pair {missing} has no score")
    return ScoreSet(joined)


def write_checkpoint_raw(tensors: dict[str, np.ndarray], metadata: dict[str, str], path) -> None:
    """Serialize named float32 tensors + string metadata as SMDL v1.

    Metadata is written in sorted key order so identical content always
    produces identical bytes; tensor order follows the dict.
    """
    out = bytearray()
    out += SMDL_MAGIC
    out += struct.pack("<I", SMDL_VERSION)
    out += struct.pack("<I", len(metadata))
    for key in sorted(metadata):
        kb = key.encode("utf-8")
        vb = metadata[key].encode("utf-8")
        out += struct.pack("<H", len(kb)) + kb
        out += struct.pack("<I", len(vb)) + vb
    out += struct.pack("<I", len(tensors))
    for name, tensor in tensors.items():
        arr = np.asarray(tensor, dtype="<f4")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValueError(f"tensor {name!r} contains non-finite values")
        nb = name.encode("utf-8")
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes(order="C")
    Path(path).write_bytes(bytes(out))


def read_checkpoint_raw(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Parse an SMDL v1 file into (tensors, metadata), tensors as float32."""
    cur = _Cursor(Path(path).read_bytes(), path)
    magic = cur.take(4, "magic")
    if magic != SMDL_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {SMDL_MAGIC!r}")
    (version,) = struct.unpack("<I", cur.take(4, "version"))
    if version != SMDL_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported SMDL version {version}")
    (n_meta,) = struct.unpack("<I", cur.take(4, "metadata count"))
    metadata: dict[str, str] = {}
    for i in range(n_meta):
        (klen,) = struct.unpack("<H", cur.take(2, f"metadata {i} key length"))
        key = cur.take(klen, f"metadata {i} key").decode("utf-8")
        (vlen,) = struct.unpack("<I", cur.take(4, f"metadata {i} value length"))
        value = cur.take(vlen, f"metadata {i} value").decode("utf-8")
        if key in metadata:
            raise DuplicateIdError(f"{path}: duplicate metadata key {key!r}")
        metadata[key] = value
    (n_tensors,) = struct.unpack("<I", cur.take(4, "tensor count"))
    tensors: dict[str, np.ndarray] = {}
    for i in range(n_tensors):
        (nlen,) = struct.unpack("<H", cur.take(2, f"tensor {i} name length"))
        name = cur.take(nlen, f"tensor {i} name").decode("utf-8")
        if name in tensors:
            raise DuplicateIdError(f"{path}: duplicate tensor name {name!r}")
        (ndim,) = struct.unpack("<I", cur.take(4, f"tensor {name!r} ndim"))
        dims = struct.unpack(f"<{ndim}I", cur.take(4 * ndim, f"tensor {name!r} dims"))
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(
            cur.take(4 * size, f"tensor {name!r} data"), dtype="<f4"
        ).reshape(dims)
        if not np.all(np.isfinite(data)):
            raise NonFiniteValueError(f"{path}: tensor {name!r} contains non-finite values")
        tensors[name] = data
    if cur.remaining:
        raise FormatError(f"{path}: {cur.remaining} trailing bytes after last tensor")
    return tensors, metadata


def _expected_shapes(d_asv: int, d_cm: int, h1: int, h2: int) -> dict[str, tuple]:
    return {
        "w_asv": (d_asv,),
        "asv_cal": (2,),
        "cm_cal": (2,),
        "mlp.w1": (h1, d_asv + d_cm),
        "mlp.b1": (h1,),
        "mlp.w2": (h2, h1),
        "mlp.b2": (h2,),
        "mlp.w3": (1, h2),
        "mlp.b3": (1,),
        "rho_raw": (1,),
        "tau_soft": (1,),
    }


def save_checkpoint(params: ModelParams, metadata: dict[str, str], path) -> None:
    """Write model parameters as an SMDL checkpoint.

    Structural metadata (dims, fusion mode) is derived from the parameters
    and overrides any caller-provided entries of the same name.
    """
    meta = dict(metadata)
    meta.update(
        {
            "format_version": str(SMDL_VERSION),
            "d_asv": str(params.d_asv),
            "d_cm": str(params.d_cm),
            "h1": str(params.hidden1),
            "h2": str(params.hidden2),
            "rho_mode": "trainable" if params.trainable_rho else "frozen",
        }
    )
    if not params.trainable_rho:
        meta["rho_value"] = repr(float(params.rho_frozen))
    tensors = {name: arr for name, arr in params.tensor_items()}
    write_checkpoint_raw(tensors, meta, path)


def load_checkpoint(path) -> tuple[ModelParams, dict[str, str]]:
    """Read an SMDL checkpoint back into float64 parameters."""
    tensors, metadata = read_checkpoint_raw(path)
    for key in REQUIRED_METADATA:
        if key not in metadata:
            raise FormatError(f"{path}: checkpoint metadata lacks required key {key!r}")
    try:
        d_asv = int(metadata["d_asv"])
        d_cm = int(metadata["d_cm"])
        h1 = int(metadata["h1"])
        h2 = int(metadata["h2"])
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer dimension metadata") from exc
    rho_mode = metadata["rho_mode"]
    if rho_mode not in ("frozen", "trainable"):
        raise FormatError(f"{path}: unknown rho_mode {rho_mode!r}")
    rho_frozen = None
    if rho_mode == "frozen":
        if "rho_value" not in metadata:
            raise FormatError(f"{path}: frozen rho_mode without rho_value")
        rho_frozen = float(metadata["rho_value"])
        if not 0.0 <= rho_frozen <= 1.0:
            raise FormatError(f"{path}: rho_value {rho_frozen} outside [0, 1]")

    expected = _expected_shapes(d_asv, d_cm, h1, h2)
    kwargs = {}
    for name, attr in TENSOR_FIELDS:
        if name not in tensors:
            raise MissingTensorError(f"{path}: missing tensor {name!r}")
        arr = tensors[name]
        if arr.shape != expected[name]:
            raise ShapeMismatchError(
                f"{path}: tensor {name!r} has shape {arr.shape}, "
                f"expected {expected[name]} from declared dims"
            )
        kwargs[attr] = arr.astype(np.float64)
    extra = set(tensors) - {name for name, _ in TENSOR_FIELDS}
    if extra:
        raise FormatError(f"{path}: unexpected tensors {sorted(extra)}")
    return ModelParams(rho_frozen=rho_frozen, **kwargs), metadata

"""Cross-component SEMB conformance: files written on either side must
validate and parse on the other. No pretrained model is involved."""

import numpy as np
import pytest

sasvfuse_dataio = pytest.importorskip(
    "sasvfuse.dataio", reason="conformance needs the consumer toolkit installed"
)

from extractor_bridge.sembfile import read_semb, verify_semb, write_semb

ID_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789_-.é世☃"


def random_entries(rng, dim):
    entries = []
    used = set()
    for _ in range(int(rng.integers(0, 8))):
        length = int(rng.integers(1, 12))
        utt = "".join(ID_ALPHABET[int(i)] for i in rng.integers(0, len(ID_ALPHABET), length))
        if utt in used:
            continue
        used.add(utt)
        entries.append((utt, rng.normal(0, 1, dim).astype(np.float32)))
    return entries


def test_bridge_written_files_parse_in_the_toolkit(tmp_path):
    rng = np.random.default_rng(1001)
    for case in range(60):
        dim = int(rng.integers(1, 48))
        entries = random_entries(rng, dim)
        path = tmp_path / "bridge.semb"
        write_semb(entries, dim, path)
        store = sasvfuse_dataio.read_embeddings(path)
        assert store.dim == dim
        assert store.ids() == [u for u, _ in entries]
        for utt, vec in entries:
            assert np.array_equal(store.get(utt), vec.astype(np.float64))


def test_toolkit_written_files_verify_and_parse_in_the_bridge(tmp_path):
    rng = np.random.default_rng(2002)
    for case in range(60):
        dim = int(rng.integers(1, 48))
        entries = random_entries(rng, dim)
        store = sasvfuse_dataio.EmbeddingStore(dim)
        for utt, vec in entries:
            store.add(utt, vec)
        path = tmp_path / "toolkit.semb"
        sasvfuse_dataio.write_embeddings(store, path)
        report = verify_semb(path)
        assert report.ok, report.summary()
        got_dim, got = read_semb(path)
        assert got_dim == dim
        assert [u for u, _ in got] == [u for u, _ in entries]
        for (_, a), (_, b) in zip(got, entries):
            assert np.array_equal(a, b)


def test_identical_bytes_both_ways(tmp_path):
    rng = np.random.default_rng(3003)
    dim = 16
    entries = random_entries(rng, dim)
    bridge_path = tmp_path / "a.semb"
    toolkit_path = tmp_path / "b.semb"
    write_semb(entries, dim, bridge_path)
    store = sasvfuse_dataio.EmbeddingStore(dim)
    for utt, vec in entries:
        store.add(utt, vec)
    sasvfuse_dataio.write_embeddings(store, toolkit_path)
    assert bridge_path.read_bytes() == toolkit_path.read_bytes()


def test_toolkit_rejects_what_the_verifier_flags(tmp_path):
    import struct

    blob = b"SEMB" + struct.pack("<IIQ", 1, 2, 1)
    blob += struct.pack("<H", 1) + b"u" + struct.pack("<ff", 1.0, float("inf"))
    path = tmp_path / "inf.semb"
    path.write_bytes(blob)
    assert not verify_semb(path).ok
    with pytest.raises(sasvfuse_dataio.NonFiniteValueError):
        sasvfuse_dataio.read_embeddings(path)

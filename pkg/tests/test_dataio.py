import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sasvfuse import dataio
from sasvfuse.dataio import (
    BadMagicError,
    DuplicateIdError,
    EmbeddingStore,
    FormatError,
    MissingTensorError,
    NonFiniteValueError,
    ScoreParseError,
    ScoreRecord,
    ScoreSet,
    ShapeMismatchError,
    TrialParseError,
    TrialRecord,
    TruncatedFileError,
    UnsupportedVersionError,
    join_scores_with_trials,
    load_checkpoint,
    read_checkpoint_raw,
    read_embeddings,
    read_scores,
    read_trials,
    save_checkpoint,
    write_checkpoint_raw,
    write_embeddings,
    write_scores,
    write_trials,
)
from sasvfuse.network import init_params


def semb_bytes(dim, records, version=1, count=None):
    """Hand-rolled SEMB bytes, independent of the writer."""
    out = b"SEMB" + struct.pack("<IIQ", version, dim, len(records) if count is None else count)
    for utt_id, values in records:
        ident = utt_id.encode("utf-8")
        out += struct.pack("<H", len(ident)) + ident
        out += np.asarray(values, dtype="<f4").tobytes()
    return out


class TestSembFormat:
    def test_minimal_well_formed_file(self, tmp_path):
        path = tmp_path / "e.semb"
        path.write_bytes(semb_bytes(2, [("u1", [1.0, 0.0])]))
        store = read_embeddings(path)
        assert store.dim == 2
        assert store.ids() == ["u1"]
        assert np.array_equal(store.get("u1"), np.array([1.0, 0.0]))

    def test_round_trip_is_bit_identical(self, tmp_path):
        store = EmbeddingStore(3)
        store.add("a", [0.25, -1.5, 3.0])
        store.add("b", [1e-4, 2.0, -0.125])
        path = tmp_path / "s.semb"
        write_embeddings(store, path)
        assert read_embeddings(path) == store

    def test_truncated_record_count(self, tmp_path):
        path = tmp_path / "t.semb"
        path.write_bytes(semb_bytes(2, [("u1", [1.0, 0.0])], count=2))
        with pytest.raises(TruncatedFileError):
            read_embeddings(path)

    def test_empty_store_is_twenty_bytes(self, tmp_path):
        path = tmp_path / "e.semb"
        write_embeddings(EmbeddingStore(4), path)
        assert path.stat().st_size == 20  # magic + version + dim + count

    def test_single_record_sizes(self, tmp_path):
        store = EmbeddingStore(1)
        store.add("a", [2.0])
        path = tmp_path / "one.semb"
        write_embeddings(store, path)
        assert path.stat().st_size == 20 + (2 + 1 + 4)

    def test_writer_is_deterministic(self, tmp_path):
        store = EmbeddingStore(2)
        store.add("x", [0.5, 0.5])
        write_embeddings(store, tmp_path / "a.semb")
        write_embeddings(store, tmp_path / "b.semb")
        assert (tmp_path / "a.semb").read_bytes() == (tmp_path / "b.semb").read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.semb"
        path.write_bytes(b"NOPE" + semb_bytes(1, [])[4:])
        with pytest.raises(BadMagicError):
            read_embeddings(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "v9.semb"
        path.write_bytes(semb_bytes(1, [], version=9))
        with pytest.raises(UnsupportedVersionError):
            read_embeddings(path)

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "dup.semb"
        path.write_bytes(semb_bytes(1, [("u", [1.0]), ("u", [2.0])]))
        with pytest.raises(DuplicateIdError):
            read_embeddings(path)

    def test_non_finite_value(self, tmp_path):
        path = tmp_path / "nan.semb"
        raw = b"SEMB" + struct.pack("<IIQ", 1, 1, 1)
        raw += struct.pack("<H", 1) + b"u" + struct.pack("<f", float("nan"))
        path.write_bytes(raw)
        with pytest.raises(NonFiniteValueError):
            read_embeddings(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "trail.semb"
        path.write_bytes(semb_bytes(1, [("u", [1.0])]) + b"\x00")
        with pytest.raises(FormatError):
            read_embeddings(path)

    def test_store_rejects_wrong_dim_and_duplicates(self):
        store = EmbeddingStore(2)
        store.add("u", [1.0, 2.0])
        with pytest.raises(DuplicateIdError):
            store.add("u", [1.0, 2.0])
        with pytest.raises(ShapeMismatchError):
            store.add("v", [1.0])
        with pytest.raises(NonFiniteValueError):
            store.add("w", [np.inf, 0.0])


class TestTrialList:
    def test_basic_line(self, tmp_path):
        path = tmp_path / "t.trl"
        path.write_text("e1 t1 target\n")
        assert read_trials(path) == [TrialRecord("e1", "t1", "target")]

    def test_comment_and_blank_skipped(self, tmp_path):
        path = tmp_path / "t.trl"
        path.write_text("# comment\n\ne1 t1 spoof\n")
        assert read_trials(path) == [TrialRecord("e1", "t1", "spoof")]

    def test_unknown_label(self, tmp_path):
        path = tmp_path / "t.trl"
        path.write_text("e1 t1 bona\n")
        with pytest.raises(TrialParseError, match="unknown label"):
            read_trials(path)

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "t.trl"
        path.write_text("e1 target\n")
        with pytest.raises(TrialParseError, match="3 space-separated"):
            read_trials(path)

    def test_empty_id(self, tmp_path):
        path = tmp_path / "t.trl"
        path.write_text(" t1 target\n")
        with pytest.raises(TrialParseError, match="empty"):
            read_trials(path)

    def test_write_read_round_trip(self, tmp_path):
        trials = [
            TrialRecord("e1", "t1", "target"),
            TrialRecord("e1", "t2", "nontarget"),
            TrialRecord("e2", "t3", "spoof"),
        ]
        path = tmp_path / "t.trl"
        write_trials(trials, path)
        assert read_trials(path) == trials

    def test_write_rejects_unrepresentable_id(self, tmp_path):
        with pytest.raises(FormatError):
            write_trials([TrialRecord("a b", "t", "target")], tmp_path / "x.trl")


class TestScoreFile:
    def test_line_format(self, tmp_path):
        path = tmp_path / "s.tsv"
        write_scores(ScoreSet([ScoreRecord("e1", "t1", None, 2.0)]), path)
        assert path.read_text() == "e1\tt1\t2.000000\n"

    def test_rounding_at_six_places(self, tmp_path):
        path = tmp_path / "s.tsv"
        write_scores(ScoreSet([ScoreRecord("e", "t", None, 1.5662426)]), path)
        assert path.read_text() == "e\tt\t1.566243\n"

    def test_round_trip_preserves_order_within_tolerance(self, tmp_path):
        records = [
            ScoreRecord("e1", "t1", None, 0.1234567),
            ScoreRecord("e2", "t2", None, -3.5),
            ScoreRecord("e0", "t0", None, 7.25),
        ]
        path = tmp_path / "s.tsv"
        write_scores(ScoreSet(records), path)
        back = read_scores(path)
        assert [(r.enrol_id, r.test_id) for r in back.records] == [
            (r.enrol_id, r.test_id) for r in records
        ]
        for a, b in zip(back.records, records):
            assert abs(a.score - b.score) <= 1e-6

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "s.tsv"
        path.write_text("e1\tt1\tnot-a-number\n")
        with pytest.raises(ScoreParseError):
            read_scores(path)
        path.write_text("e1 t1 1.0\n")
        with pytest.raises(ScoreParseError):
            read_scores(path)

    def test_join_with_trials(self):
        trials = [TrialRecord("e", "t1", "target"), TrialRecord("e", "t2", "spoof")]
        scores = ScoreSet(
            [ScoreRecord("e", "t1", None, 1.0), ScoreRecord("e", "t2", None, -1.0)]
        )
        joined = join_scores_with_trials(scores, trials)
        assert [r.label for r in joined.records] == ["target", "spoof"]

    def test_join_missing_and_extra_pairs(self):
        trials = [TrialRecord("e", "t1", "target"), TrialRecord("e", "t2", "spoof")]
        short = ScoreSet([ScoreRecord("e", "t1", None, 1.0)])
        with pytest.raises(ValueError, match=r"\('e', 't2'\)"):
            join_scores_with_trials(short, trials)
        extra = ScoreSet(
            [
                ScoreRecord("e", "t1", None, 1.0),
                ScoreRecord("e", "t2", None, 0.0),
                ScoreRecord("e", "t3", None, 0.0),
            ]
        )
        with pytest.raises(ValueError, match=r"\('e', 't3'\)"):
            join_scores_with_trials(extra, trials)


class TestCheckpoint:
    def make_params(self):
        return init_params(3, 2, hidden1=4, hidden2=2, seed=1, rho=0.5).quantized()

    def test_save_load_round_trip(self, tmp_path):
        params = self.make_params()
        path = tmp_path / "m.smdl"
        save_checkpoint(params, {"note": "x"}, path)
        loaded, meta = load_checkpoint(path)
        assert loaded.allclose(params)
        assert meta["note"] == "x"
        assert meta["d_asv"] == "3" and meta["d_cm"] == "2"
        assert meta["rho_mode"] == "frozen"

    def test_save_is_deterministic_and_rewritable(self, tmp_path):
        params = self.make_params()
        save_checkpoint(params, {"a": "1"}, tmp_path / "m1.smdl")
        save_checkpoint(params, {"a": "1"}, tmp_path / "m2.smdl")
        assert (tmp_path / "m1.smdl").read_bytes() == (tmp_path / "m2.smdl").read_bytes()
        # load -> save reproduces the original bytes
        loaded, meta = load_checkpoint(tmp_path / "m1.smdl")
        save_checkpoint(loaded, meta, tmp_path / "m3.smdl")
        assert (tmp_path / "m3.smdl").read_bytes() == (tmp_path / "m1.smdl").read_bytes()

    def test_missing_tensor(self, tmp_path):
        params = self.make_params()
        path = tmp_path / "m.smdl"
        save_checkpoint(params, {}, path)
        tensors, meta = read_checkpoint_raw(path)
        del tensors["mlp.w1"]
        write_checkpoint_raw(tensors, meta, path)
        with pytest.raises(MissingTensorError, match="mlp.w1"):
            load_checkpoint(path)

    def test_shape_mismatch_against_declared_dims(self, tmp_path):
        params = self.make_params()
        path = tmp_path / "m.smdl"
        save_checkpoint(params, {}, path)
        tensors, meta = read_checkpoint_raw(path)
        meta["d_asv"] = "192"  # declared dims no longer match the stored tensors
        write_checkpoint_raw(tensors, meta, path)
        with pytest.raises(ShapeMismatchError):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path):
        params = self.make_params()
        path = tmp_path / "m.smdl"
        save_checkpoint(params, {}, path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 2)
        path.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedVersionError):
            load_checkpoint(path)

    def test_trainable_rho_round_trip(self, tmp_path):
        params = init_params(2, 2, hidden1=3, hidden2=2, seed=0, rho="trainable")
        params.rho_raw[0] = 0.75
        params = params.quantized()
        path = tmp_path / "m.smdl"
        save_checkpoint(params, {}, path)
        loaded, meta = load_checkpoint(path)
        assert meta["rho_mode"] == "trainable"
        assert loaded.rho_frozen is None
        assert loaded.allclose(params)


# ---------------------------------------------------------------------------
# Randomized round-trip properties


@st.composite
def embedding_store_strategy(draw):
    dim = draw(st.integers(min_value=1, max_value=64))
    ids = draw(st.lists(st.text(min_size=1, max_size=16), unique=True, max_size=6))
    store = EmbeddingStore(dim)
    for utt_id in ids:
        vec = draw(
            st.lists(
                st.floats(allow_nan=False, allow_infinity=False, width=32),
                min_size=dim,
                max_size=dim,
            )
        )
        store.add(utt_id, vec)
    return store


plain_id = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz0123456789_-.", min_size=1, max_size=12
)


@given(embedding_store_strategy())
@settings(max_examples=60, deadline=None)
def test_embedding_round_trip_property(tmp_path_factory, store):
    path = tmp_path_factory.mktemp("semb") / "s.semb"
    write_embeddings(store, path)
    assert read_embeddings(path) == store


@given(
    st.lists(
        st.tuples(plain_id, plain_id, st.sampled_from(dataio.LABELS)), max_size=12
    )
)
@settings(max_examples=50, deadline=None)
def test_trial_round_trip_property(tmp_path_factory, rows):
    trials = [TrialRecord(*row) for row in rows]
    path = tmp_path_factory.mktemp("trl") / "t.trl"
    write_trials(trials, path)
    assert read_trials(path) == trials


@given(
    st.lists(
        st.tuples(
            plain_id,
            plain_id,
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
        ),
        max_size=12,
    )
)
@settings(max_examples=50, deadline=None)
def test_score_round_trip_property(tmp_path_factory, rows):
    scores = ScoreSet([ScoreRecord(e, t, None, s) for e, t, s in rows])
    path = tmp_path_factory.mktemp("sc") / "s.tsv"
    write_scores(scores, path)
    back = read_scores(path)
    assert len(back) == len(scores)
    for a, b in zip(back.records, scores.records):
        assert (a.enrol_id, a.test_id) == (b.enrol_id, b.test_id)
        assert abs(a.score - b.score) <= 1e-6

"""Deterministic synthetic SASV corpora with known class structure.

Speaker identities are isotropic unit vectors; every utterance's ASV
embedding is the unit-normalized speaker vector plus Gaussian noise.
Countermeasure embeddings cluster at the origin for bonafide speech and
are displaced by spoof_shift along one fixed direction for spoofed
speech; both use asv_noise as their per-component spread. Spoofed
utterances mimic their speaker perfectly in ASV space, so only the CM
space separates target from spoof trials.

Everything is a pure function of the config, including trial sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import EmbeddingStore, TrialRecord
from .rngs import STREAM_SYNTH, stream_rng

DEV_SPEAKER_FRACTION = 0.2


@dataclass(frozen=True)
class SynthConfig:
    n_speakers: int
    utts_per_speaker: int
    d_asv: int = 192
    d_cm: int = 160
    asv_noise: float = 0.1
    spoof_shift: float = 1.0
    spoof_fraction: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.n_speakers < 4:
            raise ValueError(
                "need at least 4 speakers: each of the speaker-disjoint train/dev "
                "splits needs 2 for nontarget trials"
            )
        if self.utts_per_speaker < 1:
            raise ValueError("utts_per_speaker must be positive")
        if self.d_asv < 2 or self.d_cm < 2:
            raise ValueError("embedding dimensions must be at least 2")
        if self.asv_noise < 0 or self.spoof_shift < 0:
            raise ValueError("noise and shift must be nonnegative")
        if not 0.0 <= self.spoof_fraction <= 1.0:
            raise ValueError("spoof_fraction must lie in [0, 1]")
        if self.n_spoof_per_speaker < 1 or self.n_bona_per_speaker < 2:
            raise ValueError(
                "config cannot produce all three trial classes: needs >= 2 bonafide "
                f"and >= 1 spoofed utterances per speaker, got "
                f"{self.n_bona_per_speaker} / {self.n_spoof_per_speaker}"
            )

    @property
    def n_spoof_per_speaker(self) -> int:
        return int(round(self.spoof_fraction * self.utts_per_speaker))

    @property
    def n_bona_per_speaker(self) -> int:
        return self.utts_per_speaker - self.n_spoof_per_speaker


PRESETS: dict[str, SynthConfig] = {
    # Near-separable: tight speaker clusters, spoof displacement far
    # beyond the noise floor.
    "easy": SynthConfig(
        n_speakers=50,
        utts_per_speaker=10,
        asv_noise=0.05,
        spoof_shift=4.0,
        seed=101,
    ),
    # Heavy overlap in both spaces.
    "hard": SynthConfig(
        n_speakers=50,
        utts_per_speaker=10,
        asv_noise=0.4,
        spoof_shift=0.8,
        seed=202,
    ),
    # Spoofed and bonafide CM embeddings are identically distributed, so
    # no system can beat the spoof-prior cost floor.
    "no-spoof-signal": SynthConfig(
        n_speakers=50,
        utts_per_speaker=10,
        asv_noise=0.05,
        spoof_shift=0.0,
        seed=303,
    ),
}


def preset(name: str) -> SynthConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r} (known: {sorted(PRESETS)})") from None


def preset_with_seed(name: str, seed: int | None) -> SynthConfig:
    cfg = preset(name)
    return cfg if seed is None else replace(cfg, seed=seed)


@dataclass
class SynthCorpus:
    asv_store: EmbeddingStore
    cm_store: EmbeddingStore
    train_trials: list[TrialRecord]
    dev_trials: list[TrialRecord]

    def class_counts(self, split: str) -> dict[str, int]:
        trials = self.train_trials if split == "train" else self.dev_trials
        counts: dict[str, int] = {}
        for t in trials:
            counts[t.label] = counts.get(t.label, 0) + 1
        return counts


def _unit_rows(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m, axis=-1, keepdims=True)


def generate(cfg: SynthConfig) -> SynthCorpus:
    """Build embedding stores and speaker-disjoint train/dev trial lists.

    Trials are balanced 1:1:1 across the classes (priors belong to the
    operating point, not the data): per speaker, every ordered bonafide
    pair is a target trial, and as many nontarget and spoof trials are
    sampled against it.
    """
    cfg.validate()
    rng = stream_rng(cfg.seed, STREAM_SYNTH)
    n_spk, n_utt = cfg.n_speakers, cfg.utts_per_speaker
    n_bona = cfg.n_bona_per_speaker

    spoof_dir = _unit_rows(rng.standard_normal(cfg.d_cm))
    speakers = _unit_rows(rng.standard_normal((n_spk, cfg.d_asv)))
    asv_noise = rng.standard_normal((n_spk, n_utt, cfg.d_asv))
    cm_noise = rng.standard_normal((n_spk, n_utt, cfg.d_cm))

    asv_store = EmbeddingStore(cfg.d_asv)
    cm_store = EmbeddingStore(cfg.d_cm)
    bona_ids: list[list[str]] = []
    spoof_ids: list[list[str]] = []
    for k in range(n_spk):
        bona_ids.append([])
        spoof_ids.append([])
        for j in range(n_utt):
            utt_id = f"s{k:04d}u{j:03d}"
            spoofed = j >= n_bona
            asv_vec = _unit_rows(speakers[k] + cfg.asv_noise * asv_noise[k, j])
            cm_vec = cfg.asv_noise * cm_noise[k, j]
            if spoofed:
                cm_vec = cm_vec + cfg.spoof_shift * spoof_dir
            asv_store.add(utt_id, asv_vec)
            cm_store.add(utt_id, cm_vec)
            (spoof_ids if spoofed else bona_ids)[k].append(utt_id)

    n_dev = max(2, int(round(DEV_SPEAKER_FRACTION * n_spk)))
    train_speakers = list(range(n_spk - n_dev))
    dev_speakers = list(range(n_spk - n_dev, n_spk))

    def split_trials(split: list[int]) -> list[TrialRecord]:
        # (enrol, test) pairs are sampled without replacement so that every
        # trial is unique and score files join back losslessly.
        trials: list[TrialRecord] = []
        for k in split:
            bona, spoof = bona_ids[k], spoof_ids[k]
            b, ns = len(bona), len(spoof)
            others = [s for s in split if s != k]
            target_pairs = [(i, j) for i in range(b) for j in range(b) if i != j]
            per_class = min(len(target_pairs), b * ns, b * len(others) * b)
            if per_class < len(target_pairs):
                chosen = rng.choice(len(target_pairs), size=per_class, replace=False)
            else:
                chosen = np.arange(len(target_pairs))
            for idx in chosen:
                i, j = target_pairs[int(idx)]
                trials.append(TrialRecord(bona[i], bona[j], "target"))
            for idx in rng.choice(b * len(others) * b, size=per_class, replace=False):
                i, rest = divmod(int(idx), len(others) * b)
                o, j = divmod(rest, b)
                trials.append(TrialRecord(bona[i], bona_ids[others[o]][j], "nontarget"))
            for idx in rng.choice(b * ns, size=per_class, replace=False):
                i, j = divmod(int(idx), ns)
                trials.append(TrialRecord(bona[i], spoof[j], "spoof"))
        return trials

    return SynthCorpus(
        asv_store=asv_store,
        cm_store=cm_store,
        train_trials=split_trials(train_speakers),
        dev_trials=split_trials(dev_speakers),
    )

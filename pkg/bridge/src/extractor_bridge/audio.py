"""PCM WAV loading for model inference: float32 mono in [-1, 1]."""

from __future__ import annotations

import wave

import numpy as np


class AudioDecodeError(ValueError):
    pass


_WIDTH_DTYPES = {1: np.uint8, 2: np.int16, 4: np.int32}


def load_wav(path) -> tuple[np.ndarray, int]:
    """Return (samples, sample_rate). Multi-channel audio is averaged."""
    try:
        with wave.open(str(path), "rb") as wav:
            n_channels = wav.getnchannels()
            width = wav.getsampwidth()
            rate = wav.getframerate()
            frames = wav.readframes(wav.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise AudioDecodeError(f"{path}: cannot decode WAV: {exc}") from exc
    if width not in _WIDTH_DTYPES:
        raise AudioDecodeError(f"{path}: unsupported sample width {width}")
    data = np.frombuffer(frames, dtype=_WIDTH_DTYPES[width]).astype(np.float32)
    if width == 1:
        data = (data - 128.0) / 128.0
    else:
        data = data / float(2 ** (8 * width - 1))
    if n_channels > 1:
        usable = (data.shape[0] // n_channels) * n_channels
        data = data[:usable].reshape(-1, n_channels).mean(axis=1)
    if data.size == 0:
        raise AudioDecodeError(f"{path}: no audio frames")
    return data, rate


def resample_linear(samples: np.ndarray, rate: int, target_rate: int) -> np.ndarray:
    """Linear-interpolation resampling; adequate for feature extraction."""
    if rate == target_rate:
        return samples
    duration = samples.shape[0] / rate
    n_out = max(1, int(round(duration * target_rate)))
    src_t = np.arange(samples.shape[0]) / rate
    dst_t = np.arange(n_out) / target_rate
    return np.interp(dst_t, src_t, samples).astype(np.float32)

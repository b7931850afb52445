"""Adapters around published pretrained models.

Each adapter owns only checkpoint loading and the waveform -> embedding
call; the heavy dependencies (torch, the model repositories) are imported
lazily so the bridge itself stays installable everywhere. Every model runs
in eval mode on a fixed device, so repeated extraction of the same file
yields identical embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np


class MissingCheckpointError(RuntimeError):
    """The pretrained weights (or their support code) are not available."""


@dataclass
class Embedder:
    name: str
    dim: int
    expected_rate: int | None
    embed: Callable[[np.ndarray, int], np.ndarray]  # (samples, rate) -> (dim,) float32


def _require_torch(model_name: str):
    try:
        import torch  # noqa: F401

        return torch
    except ImportError as exc:
        raise MissingCheckpointError(
            f"{model_name}: torch is required to run pretrained models "
            f"(pip install 'extractor-bridge[models]')"
        ) from exc


def _require_checkpoint(model_name: str, checkpoint) -> Path:
    if checkpoint is None:
        raise MissingCheckpointError(
            f"{model_name}: no checkpoint given; pass --checkpoint with a local weights file"
        )
    path = Path(checkpoint)
    if not path.exists():
        raise MissingCheckpointError(f"{model_name}: checkpoint not found: {path}")
    return path


def _embedding_dim(model, torch, rate: int) -> int:
    with torch.no_grad():
        probe = torch.zeros(1, rate)  # one second of silence
        out = model(probe)
    return int(out.reshape(-1).shape[0])


def load_ecapa(checkpoint=None, device: str = "cpu") -> Embedder:
    """Speaker embeddings from a pretrained ECAPA-TDNN checkpoint.

    Expects the upstream `ECAPAModel`/`model.ECAPA_TDNN` module layout on
    sys.path next to the checkpoint (the published repository's interface).
    """
    torch = _require_torch("ecapa")
    path = _require_checkpoint("ecapa", checkpoint)
    try:
        from model import ECAPA_TDNN  # provided by the upstream repository
    except ImportError as exc:
        raise MissingCheckpointError(
            "ecapa: upstream repository module 'model' not importable; "
            "add the ECAPA-TDNN repo to PYTHONPATH"
        ) from exc
    net = ECAPA_TDNN(C=1024)
    state = torch.load(path, map_location=device)
    net.load_state_dict({k.replace("speaker_encoder.", ""): v for k, v in state.items()
                         if k.startswith("speaker_encoder.")}, strict=False)
    net.eval().to(device)

    def embed(samples: np.ndarray, rate: int) -> np.ndarray:
        with torch.no_grad():
            x = torch.from_numpy(samples).float().unsqueeze(0).to(device)
            out = net(x, aug=False)
        return out.squeeze(0).cpu().numpy().astype(np.float32)

    return Embedder("ecapa", _embedding_dim(lambda x: net(x, aug=False), torch, 16000),
                    16000, embed)


def load_redimnet(checkpoint=None, device: str = "cpu") -> Embedder:
    """Speaker embeddings from a pretrained ReDimNet (torch.hub packaging)."""
    torch = _require_torch("redimnet")
    path = _require_checkpoint("redimnet", checkpoint)
    try:
        bundle = torch.load(path, map_location=device)
        net = bundle["model"] if isinstance(bundle, dict) and "model" in bundle else bundle
        net.eval().to(device)
    except Exception as exc:
        raise MissingCheckpointError(f"redimnet: cannot load checkpoint {path}: {exc}") from exc

    def embed(samples: np.ndarray, rate: int) -> np.ndarray:
        with torch.no_grad():
            x = torch.from_numpy(samples).float().unsqueeze(0).to(device)
            out = net(x)
        return out.reshape(-1).cpu().numpy().astype(np.float32)

    return Embedder("redimnet", _embedding_dim(net, torch, 16000), 16000, embed)


def load_ssl_aasist(checkpoint=None, device: str = "cpu") -> Embedder:
    """Countermeasure embeddings from a pretrained SSL-AASIST model.

    Uses the upstream repository's `Model` class with its SSL front-end
    frozen; the embedding is the layer feeding the final classifier.
    """
    torch = _require_torch("ssl-aasist")
    path = _require_checkpoint("ssl-aasist", checkpoint)
    try:
        from model import Model as SslAasist  # upstream repository module
    except ImportError as exc:
        raise MissingCheckpointError(
            "ssl-aasist: upstream repository module 'model' not importable; "
            "add the SSL anti-spoofing repo to PYTHONPATH"
        ) from exc
    net = SslAasist(None, device)
    net.load_state_dict(torch.load(path, map_location=device))
    net.eval().to(device)

    def embed(samples: np.ndarray, rate: int) -> np.ndarray:
        with torch.no_grad():
            x = torch.from_numpy(samples).float().unsqueeze(0).to(device)
            _, feats = net(x, return_embedding=True)
        return feats.reshape(-1).cpu().numpy().astype(np.float32)

    return Embedder("ssl-aasist", _embedding_dim(net, torch, 16000), 16000, embed)


MODEL_LOADERS = {
    "ecapa": load_ecapa,
    "redimnet": load_redimnet,
    "ssl-aasist": load_ssl_aasist,
}


def load_model(name: str, checkpoint=None, device: str = "cpu") -> Embedder:
    try:
        loader = MODEL_LOADERS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r} (known: {sorted(MODEL_LOADERS)})") from None
    return loader(checkpoint=checkpoint, device=device)

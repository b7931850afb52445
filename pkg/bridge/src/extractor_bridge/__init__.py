"""Adapters that export embeddings from pretrained audio models to SEMB v1."""

from .extract import ExtractResult, extract
from .manifest import ExtractManifest, ManifestError, read_manifest_tsv
from .models import Embedder, MissingCheckpointError, load_model
from .sembfile import SembReport, read_semb, verify_semb, write_semb

__version__ = "0.1.0"

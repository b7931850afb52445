"""Trainable spoofing-aware speaker verification back-end.

Fuses precomputed ASV and countermeasure embeddings into a single
calibrated SASV score, trained with BCE plus a differentiable
detection-cost loss and evaluated with exact cost/EER metrics.
"""

from .dataio import (
    EmbeddingStore,
    ScoreRecord,
    ScoreSet,
    TrialRecord,
    load_checkpoint,
    read_embeddings,
    read_scores,
    read_trials,
    save_checkpoint,
    write_embeddings,
    write_scores,
    write_trials,
)
from .losses import AdcfOperatingPoint, LossConfig, adcf_preset, bce_loss, combined_loss, soft_adcf_loss
from .metrics import adcf_at_threshold, det_points, eer, eer_report, min_adcf
from .network import (
    ModelParams,
    TrialBatch,
    TrialTensors,
    asv_score,
    backward,
    backward_batch,
    calibrate,
    cm_score,
    forward,
    forward_batch,
    fuse,
    init_params,
)
from .synthetic import SynthConfig, generate, preset
from .training import TrainConfig, TrainReport, fit, make_batches, score_trials

__version__ = "0.1.0"

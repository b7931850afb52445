"""Trainable SASV back-end network.

Per trial, the network combines two branches into one spoofing-aware
verification score:

  ASV branch:  s_asv = cos(w ⊙ e_enr, w ⊙ e_tst), affine-calibrated.
  CM branch:   MLP over [e_tst_asv ; e_tst_cm], affine-calibrated.
  Fusion:      s_sasv = -log[(1-rho) * exp(-s_asv_cal) + rho * exp(-s_cm_cal)]

All arithmetic is float64, gradients are hand-derived, and batched
evaluation reduces with fixed ordering so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rngs import STREAM_INIT, stream_rng

RHO_EPS = 1e-7
LEAKY_SLOPE = 0.01

# Canonical tensor naming, also used by checkpoints. Order is fixed.
TENSOR_FIELDS = (
    ("w_asv", "w_asv"),
    ("asv_cal", "asv_cal"),
    ("cm_cal", "cm_cal"),
    ("mlp.w1", "mlp_w1"),
    ("mlp.b1", "mlp_b1"),
    ("mlp.w2", "mlp_w2"),
    ("mlp.b2", "mlp_b2"),
    ("mlp.w3", "mlp_w3"),
    ("mlp.b3", "mlp_b3"),
    ("rho_raw", "rho_raw"),
    ("tau_soft", "tau_soft"),
)
TENSOR_NAMES = tuple(name for name, _ in TENSOR_FIELDS)


class DegenerateEmbeddingError(ValueError):
    """A reweighted embedding has zero norm; cosine scoring is undefined."""


@dataclass
class ModelParams:
    """All trainable tensors, float64.

    ``rho_frozen`` holds the fixed mixing weight when the fusion parameter
    is not trained; otherwise it is None and rho = clip(sigmoid(rho_raw)).
    ``tau_soft`` is the decision threshold used only by the soft-cost loss.
    """

    w_asv: np.ndarray
    asv_cal: np.ndarray
    cm_cal: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray
    mlp_w3: np.ndarray
    mlp_b3: np.ndarray
    rho_raw: np.ndarray
    tau_soft: np.ndarray
    rho_frozen: float | None = None

    @property
    def d_asv(self) -> int:
        return self.w_asv.shape[0]

    @property
    def d_cm(self) -> int:
        return self.mlp_w1.shape[1] - self.d_asv

    @property
    def hidden1(self) -> int:
        return self.mlp_w1.shape[0]

    @property
    def hidden2(self) -> int:
        return self.mlp_w2.shape[0]

    @property
    def trainable_rho(self) -> bool:
        return self.rho_frozen is None

    def rho(self) -> float:
        if self.rho_frozen is not None:
            return float(self.rho_frozen)
        sig = _sigmoid_scalar(float(self.rho_raw[0]))
        return min(max(sig, RHO_EPS), 1.0 - RHO_EPS)

    def tensor_items(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, attr)) for name, attr in TENSOR_FIELDS]

    def copy(self) -> "ModelParams":
        kwargs = {attr: getattr(self, attr).copy() for _, attr in TENSOR_FIELDS}
        return ModelParams(rho_frozen=self.rho_frozen, **kwargs)

    def quantized(self) -> "ModelParams":
        """Round-trip all tensors through float32, the checkpoint precision."""
        kwargs = {
            attr: getattr(self, attr).astype(np.float32).astype(np.float64)
            for _, attr in TENSOR_FIELDS
        }
        return ModelParams(rho_frozen=self.rho_frozen, **kwargs)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for _, t in self.tensor_items())

    def allclose(self, other: "ModelParams") -> bool:
        return self.rho_frozen == other.rho_frozen and all(
            np.array_equal(a, b)
            for (_, a), (_, b) in zip(self.tensor_items(), other.tensor_items())
        )


def init_params(
    d_asv: int,
    d_cm: int,
    hidden1: int = 384,
    hidden2: int = 160,
    seed: int = 0,
    rho: float | str = 0.5,
    tau_init: float = 0.0,
) -> ModelParams:
    """Initial parameters: plain cosine ASV, identity calibrations,
    uniform-fan-in/out MLP, zero biases.

    ``rho`` is either a frozen value in [0, 1] or the string "trainable"
    (trained via the logistic reparameterization, starting at 0.5).
    """
    if d_asv < 1 or d_cm < 1 or hidden1 < 1 or hidden2 < 1:
        raise ValueError("all layer dimensions must be positive")
    trainable = rho == "trainable"
    if not trainable:
        rho = float(rho)
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"frozen rho must lie in [0, 1], got {rho}")

    rng = stream_rng(seed, STREAM_INIT)
    d_in = d_asv + d_cm

    def layer(fan_out, fan_in):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in))

    return ModelParams(
        w_asv=np.ones(d_asv),
        asv_cal=np.array([0.0, 1.0]),
        cm_cal=np.array([0.0, 1.0]),
        mlp_w1=layer(hidden1, d_in),
        mlp_b1=np.zeros(hidden1),
        mlp_w2=layer(hidden2, hidden1),
        mlp_b2=np.zeros(hidden2),
        mlp_w3=layer(1, hidden2),
        mlp_b3=np.zeros(1),
        rho_raw=np.zeros(1),
        tau_soft=np.array([float(tau_init)]),
        rho_frozen=None if trainable else rho,
    )


@dataclass
class TrialTensors:
    """Embeddings for a single trial."""

    e_enr_asv: np.ndarray
    e_tst_asv: np.ndarray
    e_tst_cm: np.ndarray


@dataclass
class TrialBatch:
    """Stacked trial embeddings, one row per trial."""

    enr_asv: np.ndarray  # (B, d_asv)
    tst_asv: np.ndarray  # (B, d_asv)
    tst_cm: np.ndarray  # (B, d_cm)

    def __len__(self) -> int:
        return self.enr_asv.shape[0]

    @classmethod
    def from_single(cls, trial: TrialTensors) -> "TrialBatch":
        return cls(
            enr_asv=np.asarray(trial.e_enr_asv, dtype=np.float64).reshape(1, -1),
            tst_asv=np.asarray(trial.e_tst_asv, dtype=np.float64).reshape(1, -1),
            tst_cm=np.asarray(trial.e_tst_cm, dtype=np.float64).reshape(1, -1),
        )


@dataclass
class ForwardTrace:
    """Every intermediate needed to replay or differentiate the forward pass.

    All per-trial arrays carry a leading batch axis.
    """

    batch: TrialBatch
    e1: np.ndarray
    e2: np.ndarray
    norm1: np.ndarray
    norm2: np.ndarray
    asv_raw: np.ndarray
    asv_cal: np.ndarray
    mlp_in: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    cm_raw: np.ndarray
    cm_cal: np.ndarray
    rho: float
    omega_asv: np.ndarray
    omega_cm: np.ndarray
    sasv: np.ndarray


def _sigmoid_scalar(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def _leaky(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def _leaky_prime(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


def asv_score(e_enr: np.ndarray, e_tst: np.ndarray, w_asv: np.ndarray) -> float:
    """Cosine similarity of the dimension-reweighted embeddings."""
    e_enr = np.asarray(e_enr, dtype=np.float64)
    e_tst = np.asarray(e_tst, dtype=np.float64)
    w_asv = np.asarray(w_asv, dtype=np.float64)
    if not e_enr.shape == e_tst.shape == w_asv.shape:
        raise ValueError(
            f"dimension mismatch: enrol {e_enr.shape}, test {e_tst.shape}, "
            f"weights {w_asv.shape}"
        )
    e1 = w_asv * e_enr
    e2 = w_asv * e_tst
    n1 = float(np.linalg.norm(e1))
    n2 = float(np.linalg.norm(e2))
    if n1 == 0.0 or n2 == 0.0:
        raise DegenerateEmbeddingError("reweighted embedding has zero norm")
    return float(np.dot(e1, e2) / (n1 * n2))


def calibrate(s: float, w0: float, w1: float) -> float:
    """Affine score calibration w0 + w1 * s."""
    return float(w0 + w1 * s)


def cm_score(e_tst_asv: np.ndarray, e_tst_cm: np.ndarray, params: ModelParams) -> float:
    """MLP countermeasure score over the concatenated test embeddings."""
    e_tst_asv = np.asarray(e_tst_asv, dtype=np.float64)
    e_tst_cm = np.asarray(e_tst_cm, dtype=np.float64)
    if e_tst_asv.shape != (params.d_asv,) or e_tst_cm.shape != (params.d_cm,):
        raise ValueError(
            f"dimension mismatch: got asv {e_tst_asv.shape} / cm {e_tst_cm.shape}, "
            f"expected ({params.d_asv},) / ({params.d_cm},)"
        )
    x = np.concatenate([e_tst_asv, e_tst_cm])
    a1 = _leaky(params.mlp_w1 @ x + params.mlp_b1)
    a2 = _leaky(params.mlp_w2 @ a1 + params.mlp_b2)
    return float(params.mlp_w3[0] @ a2 + params.mlp_b3[0])


def fuse(s_asv_cal: float, s_cm_cal: float, rho: float) -> float:
    """Softmin fusion -log[(1-rho) exp(-s_asv_cal) + rho exp(-s_cm_cal)].

    Evaluated in max-shifted form so finite inputs cannot overflow;
    rho = 0 and rho = 1 return the corresponding input exactly.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if rho == 0.0:
        return float(s_asv_cal)
    if rho == 1.0:
        return float(s_cm_cal)
    m = min(s_asv_cal, s_cm_cal)
    z = (1.0 - rho) * np.exp(m - s_asv_cal) + rho * np.exp(m - s_cm_cal)
    return float(m - np.log(z))


def forward_batch(batch: TrialBatch, params: ModelParams) -> ForwardTrace:
    """Forward pass over a batch; rows are independent trials."""
    enr, tst, cm = batch.enr_asv, batch.tst_asv, batch.tst_cm
    if enr.ndim != 2 or enr.shape != tst.shape or cm.shape[0] != enr.shape[0]:
        raise ValueError("inconsistent batch shapes")
    if enr.shape[1] != params.d_asv or cm.shape[1] != params.d_cm:
        raise ValueError(
            f"dimension mismatch: batch ({enr.shape[1]}, {cm.shape[1]}) vs "
            f"params ({params.d_asv}, {params.d_cm})"
        )

    e1 = enr * params.w_asv
    e2 = tst * params.w_asv
    norm1 = np.linalg.norm(e1, axis=1)
    norm2 = np.linalg.norm(e2, axis=1)
    if np.any(norm1 == 0.0) or np.any(norm2 == 0.0):
        bad = int(np.argmax((norm1 == 0.0) | (norm2 == 0.0)))
        raise DegenerateEmbeddingError(
            f"reweighted embedding has zero norm (batch row {bad})"
        )
    asv_raw = np.sum(e1 * e2, axis=1) / (norm1 * norm2)
    asv_cal = params.asv_cal[0] + params.asv_cal[1] * asv_raw

    mlp_in = np.concatenate([tst, cm], axis=1)
    z1 = mlp_in @ params.mlp_w1.T + params.mlp_b1
    a1 = _leaky(z1)
    z2 = a1 @ params.mlp_w2.T + params.mlp_b2
    a2 = _leaky(z2)
    cm_raw = a2 @ params.mlp_w3[0] + params.mlp_b3[0]
    cm_cal = params.cm_cal[0] + params.cm_cal[1] * cm_raw

    rho = params.rho()
    n = len(batch)
    if rho == 0.0:
        sasv = asv_cal.copy()
        omega_asv, omega_cm = np.ones(n), np.zeros(n)
    elif rho == 1.0:
        sasv = cm_cal.copy()
        omega_asv, omega_cm = np.zeros(n), np.ones(n)
    else:
        m = np.minimum(asv_cal, cm_cal)
        ea = (1.0 - rho) * np.exp(m - asv_cal)
        ec = rho * np.exp(m - cm_cal)
        z = ea + ec
        sasv = m - np.log(z)
        omega_asv = ea / z
        omega_cm = ec / z

    return ForwardTrace(
        batch=batch,
        e1=e1,
        e2=e2,
        norm1=norm1,
        norm2=norm2,
        asv_raw=asv_raw,
        asv_cal=asv_cal,
        mlp_in=mlp_in,
        z1=z1,
        a1=a1,
        z2=z2,
        a2=a2,
        cm_raw=cm_raw,
        cm_cal=cm_cal,
        rho=rho,
        omega_asv=omega_asv,
        omega_cm=omega_cm,
        sasv=sasv,
    )


def forward(trial: TrialTensors, params: ModelParams) -> ForwardTrace:
    """Forward pass for one trial (a batch of one)."""
    return forward_batch(TrialBatch.from_single(trial), params)


def backward_batch(
    trace: ForwardTrace, params: ModelParams, dloss_dsasv: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients of sum_i dloss_dsasv[i] * sasv[i] w.r.t. every tensor.

    The fusion Jacobian reuses the softmin weights from the trace; batch
    reduction is an ordered sum so results do not depend on evaluation
    order. The returned dict covers all TENSOR_NAMES (tau_soft gets a zero
    gradient: the score does not depend on it).
    """
    g = np.asarray(dloss_dsasv, dtype=np.float64).reshape(-1)
    n = len(trace.batch)
    if g.shape[0] != n:
        raise ValueError(f"dloss_dsasv has {g.shape[0]} entries for batch of {n}")
    if trace.e1.shape[1] != params.d_asv or trace.z1.shape[1] != params.hidden1:
        raise ValueError("trace does not match parameter shapes")

    g_sa = g * trace.omega_asv
    g_sc = g * trace.omega_cm

    # Fusion parameter. d sasv / d rho = (exp(-s_a) - exp(-s_c)) / Z, in the
    # same max-shifted form used by the forward pass.
    g_rho_raw = 0.0
    if params.trainable_rho:
        rho = trace.rho
        m = np.minimum(trace.asv_cal, trace.cm_cal)
        ea = np.exp(m - trace.asv_cal)
        ec = np.exp(m - trace.cm_cal)
        z = (1.0 - rho) * ea + rho * ec
        dsasv_drho = (ea - ec) / z
        sig = _sigmoid_scalar(float(params.rho_raw[0]))
        drho_draw = sig * (1.0 - sig) if RHO_EPS <= sig <= 1.0 - RHO_EPS else 0.0
        g_rho_raw = float(np.sum(g * dsasv_drho)) * drho_draw

    # Calibrations.
    g_asv_cal = np.array([np.sum(g_sa), np.sum(g_sa * trace.asv_raw)])
    g_cm_cal = np.array([np.sum(g_sc), np.sum(g_sc * trace.cm_raw)])
    g_asv_raw = g_sa * params.asv_cal[1]
    g_cm_raw = g_sc * params.cm_cal[1]

    # Weighted cosine: s = <e1,e2>/(n1 n2) with e1 = w*enr, e2 = w*tst.
    inv = 1.0 / (trace.norm1 * trace.norm2)
    d_e1 = g_asv_raw[:, None] * (
        trace.e2 * inv[:, None]
        - trace.e1 * (trace.asv_raw / trace.norm1**2)[:, None]
    )
    d_e2 = g_asv_raw[:, None] * (
        trace.e1 * inv[:, None]
        - trace.e2 * (trace.asv_raw / trace.norm2**2)[:, None]
    )
    g_w_asv = np.sum(d_e1 * trace.batch.enr_asv + d_e2 * trace.batch.tst_asv, axis=0)

    # MLP.
    d_z3 = g_cm_raw  # linear output unit
    g_w3 = (d_z3[None, :] @ trace.a2)
    g_b3 = np.array([np.sum(d_z3)])
    d_a2 = d_z3[:, None] * params.mlp_w3[0]
    d_z2 = d_a2 * _leaky_prime(trace.z2)
    g_w2 = d_z2.T @ trace.a1
    g_b2 = np.sum(d_z2, axis=0)
    d_a1 = d_z2 @ params.mlp_w2
    d_z1 = d_a1 * _leaky_prime(trace.z1)
    g_w1 = d_z1.T @ trace.mlp_in
    g_b1 = np.sum(d_z1, axis=0)

    return {
        "w_asv": g_w_asv,
        "asv_cal": g_asv_cal,
        "cm_cal": g_cm_cal,
        "mlp.w1": g_w1,
        "mlp.b1": g_b1,
        "mlp.w2": g_w2,
        "mlp.b2": g_b2,
        "mlp.w3": g_w3,
        "mlp.b3": g_b3,
        "rho_raw": np.array([g_rho_raw]),
        "tau_soft": np.zeros(1),
    }


def backward(
    trace: ForwardTrace, params: ModelParams, dloss_dsasv: float
) -> dict[str, np.ndarray]:
    """Single-trial gradients; see backward_batch."""
    return backward_batch(trace, params, np.array([float(dloss_dsasv)]))

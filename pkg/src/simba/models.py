"""The three architectures and their checkpoint format.

* ``SIMBA``  - learned graph + mix-hop GC module on the latest step, a
  transformer block pooled over time, concatenated per node.
* ``GNN_RCA`` - learned graph (symmetrized) + two GCN layers on the latest step.
* ``MTGNN``  - learned graph + temporal convolution module + GC module with a
  residual from the temporal module's projected input.

All end in the same per-node feed-forward head.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .errors import ConfigurationError, DataError, DimensionError, IntegrityError
from .graph_conv import GCModule, GcnLayer, normalize_adjacency, symmetrize
from .graph_learning import GraphLearner
from .nn import Dense, Module
from .temporal import TemporalConvModule, TransformerBlock, temporal_embed

ARCHITECTURES = ("SIMBA", "GNN_RCA", "MTGNN")
DEFAULT_K = {"SIMBA": 7, "GNN_RCA": 5, "MTGNN": 5}


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "SIMBA"
    num_nodes: int = 7
    num_features: int = 6
    window: int = 5
    num_classes: int = 2
    k: int | None = None
    gl_alpha: float = 0.5
    gl_embed_dim: int = 8
    mixhop_beta: float = 0.5
    mixhop_depth: int = 2
    gc_dim: int = 32
    num_heads: int = 4
    head_size: int = 32
    ff_channels: int = 32
    ff_kernel: int = 1
    dropout: float = 0.1
    gcn_dim: int = 16
    tc_latent: int = 32
    tc_branch_channels: int = 8
    head_hidden: int = 16
    symmetrize_baseline: bool = True
    seed: int = 0

    def __post_init__(self):
        arch = self.architecture.upper()
        object.__setattr__(self, "architecture", arch)
        if arch not in ARCHITECTURES:
            raise ConfigurationError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.num_classes not in (2, 3):
            raise ConfigurationError(f"num_classes must be 2 or 3, got {self.num_classes}")
        if self.window < 1:
            raise ConfigurationError(f"window must be >= 1, got {self.window}")
        if arch == "MTGNN" and self.window < 8:
            raise ConfigurationError(f"MTGNN needs window >= 8, got {self.window}")
        if self.k is None:
            object.__setattr__(self, "k", min(DEFAULT_K[arch], self.num_nodes))
        if not 1 <= self.k <= self.num_nodes:
            raise ConfigurationError(f"k must lie in [1, {self.num_nodes}], got {self.k}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown model config key(s): {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


class FFNHead(Module):
    """``dense(hidden) -> relu -> dense(C)``; returns logits."""

    def __init__(self, rng: np.random.Generator, n_in: int, hidden: int = 16, num_classes: int = 2):
        self.hidden = Dense(rng, n_in, hidden, relu_follows=True)
        self.out = Dense(rng, hidden, num_classes)

    def __call__(self, z: Tensor) -> Tensor:
        return self.out(ad.relu(self.hidden(z)))


def ffn_head(head: FFNHead, z: Tensor) -> Tensor:
    """Per-node class probabilities."""
    return ad.softmax(head(z), axis=-1)


class _Model(Module):
    config: ModelConfig

    def _check_input(self, x: Tensor) -> tuple[int, int, int, int]:
        cfg = self.config
        if x.ndim != 4:
            raise DimensionError(f"expected a [B, N, W, F] batch, got shape {x.shape}")
        b, n, w, f = x.shape
        if (n, w, f) != (cfg.num_nodes, cfg.window, cfg.num_features):
            raise DimensionError(
                f"batch shape {x.shape} does not match config N={cfg.num_nodes}, W={cfg.window}, F={cfg.num_features}"
            )
        return b, n, w, f

    def adjacency(self) -> Tensor:
        return self.graph()

    def logits(self, x, rng: np.random.Generator | None = None) -> Tensor:
        raise NotImplementedError

    def __call__(self, x, rng: np.random.Generator | None = None) -> Tensor:
        return ad.softmax(self.logits(x, rng), axis=-1)

    forward = __call__

    def predict_proba(self, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        """Evaluation-mode probabilities ``[B, N, C]`` without recording a graph."""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                parts = [self(Tensor(x[i : i + batch_size])).data for i in range(0, len(x), batch_size)]
        finally:
            self.train(was_training)
        if not parts:
            return np.zeros((0, self.config.num_nodes, self.config.num_classes))
        return np.concatenate(parts, axis=0)


class SimbaModel(_Model):
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        F = config.num_features
        self.graph = GraphLearner(rng, config.num_nodes, config.gl_embed_dim, config.gl_alpha, config.k)
        self.gc = GCModule(rng, F, config.gc_dim, config.mixhop_depth, config.mixhop_beta)
        self.transformer = TransformerBlock(
            rng, F, config.num_heads, config.head_size, config.ff_channels, config.ff_kernel, config.dropout
        )
        self.head = FFNHead(rng, config.gc_dim + F, config.head_hidden, config.num_classes)

    def logits(self, x, rng=None) -> Tensor:
        x = ad.as_tensor(x)
        b, n, w, f = self._check_input(x)
        A = self.graph()
        tau = temporal_embed(self.transformer, x.reshape(b * n, w, f), rng).reshape(b, n, f)
        spatial = self.gc(A, x[:, :, -1, :])
        return self.head(ad.concat([spatial, tau], axis=-1))


class GnnRcaModel(_Model):
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        F = config.num_features
        self.graph = GraphLearner(rng, config.num_nodes, config.gl_embed_dim, config.gl_alpha, config.k)
        self.gcn1 = GcnLayer(rng, F, config.gcn_dim)
        self.gcn2 = GcnLayer(rng, config.gcn_dim, config.gcn_dim)
        self.head = FFNHead(rng, config.gcn_dim, config.head_hidden, config.num_classes)

    def logits(self, x, rng=None) -> Tensor:
        x = ad.as_tensor(x)
        self._check_input(x)
        A = self.graph()
        if self.config.symmetrize_baseline:
            A = symmetrize(A)
        A_norm = normalize_adjacency(A)
        h = self.gcn2(A_norm, self.gcn1(A_norm, x[:, :, -1, :]))
        return self.head(h)


class MtgnnModel(_Model):
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        latent = config.tc_latent
        self.graph = GraphLearner(rng, config.num_nodes, config.gl_embed_dim, config.gl_alpha, config.k)
        self.tc = TemporalConvModule(rng, config.num_features, latent, (2, 3, 6, 7), config.tc_branch_channels)
        tc_out = config.tc_branch_channels * 4
        self.gc = GCModule(rng, tc_out, latent, config.mixhop_depth, config.mixhop_beta)
        self.head = FFNHead(rng, latent, config.head_hidden, config.num_classes)

    def logits(self, x, rng=None) -> Tensor:
        x = ad.as_tensor(x)
        b, n, w, f = self._check_input(x)
        A = self.graph()
        h, z_last = self.tc(x.reshape(b * n, w, f))
        h = h.reshape(b, n, -1)
        g = self.gc(A, h) + z_last.reshape(b, n, -1)
        return self.head(g)


_CLASSES = {"SIMBA": SimbaModel, "GNN_RCA": GnnRcaModel, "MTGNN": MtgnnModel}


def build_model(config: ModelConfig) -> _Model:
    return _CLASSES[config.architecture](config)


def simba_forward(model: SimbaModel, batch, rng=None) -> Tensor:
    return model(batch, rng)


def gnn_rca_forward(model: GnnRcaModel, batch, rng=None) -> Tensor:
    return model(batch, rng)


def mtgnn_forward(model: MtgnnModel, batch, rng=None) -> Tensor:
    return model(batch, rng)


# -- checkpoints ---------------------------------------------------------

CKPT_MAGIC = b"SIMBACKPT"
CKPT_VERSION = 1


def model_state(model: _Model) -> dict[str, np.ndarray]:
    state = {name: p.data for name, p in model.named_parameters()}
    for name, buf in model.named_buffers():
        state[f"{name}.running_mean"] = buf.running_mean
        state[f"{name}.running_var"] = buf.running_var
    return state


def load_state(model: _Model, state: dict[str, np.ndarray]) -> None:
    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    expected = set(params) | {f"{b}.{s}" for b in buffers for s in ("running_mean", "running_var")}
    if set(state) != expected:
        missing, extra = expected - set(state), set(state) - expected
        raise IntegrityError(f"checkpoint tensors do not match model: missing={sorted(missing)} extra={sorted(extra)}")
    for name, p in params.items():
        if state[name].shape != p.shape:
            raise IntegrityError(f"shape mismatch for {name}: {state[name].shape} vs {p.shape}")
        p.data = np.array(state[name], dtype=np.float64)
    for name, buf in buffers.items():
        buf.running_mean = np.array(state[f"{name}.running_mean"], dtype=np.float64)
        buf.running_var = np.array(state[f"{name}.running_var"], dtype=np.float64)


def save_checkpoint(model: _Model, path) -> None:
    """Write ``SIMBACKPT`` | u32 version | u32 len + config JSON | 32-byte sha256
    of the JSON | u32 tensor count | per tensor: u16 name len, name, u8 ndim,
    u32 dims, float64 data (all little-endian)."""
    blob = model.config.to_json().encode()
    state = model_state(model)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(hashlib.sha256(blob).digest())
        fh.write(struct.pack("<I", len(state)))
        for name, arr in state.items():
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> _Model:
    """Rebuild a model from a checkpoint.

    Raises :class:`IntegrityError` if the stored config no longer matches its
    hash, or if ``expected_config`` hashes differently from the stored one.
    """
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(CKPT_MAGIC):
        raise IntegrityError(f"{path} is not a checkpoint (bad magic)")
    off = len(CKPT_MAGIC)
    version, blob_len = struct.unpack_from("<II", data, off)
    off += 8
    if version != CKPT_VERSION:
        raise IntegrityError(f"unsupported checkpoint version {version}")
    blob = data[off : off + blob_len]
    off += blob_len
    digest = data[off : off + 32]
    off += 32
    if hashlib.sha256(blob).digest() != digest:
        raise IntegrityError(f"{path}: config hash mismatch (corrupted checkpoint)")
    try:
        config = ModelConfig.from_dict(json.loads(blob))
    except (ValueError, TypeError) as exc:
        raise IntegrityError(f"{path}: unreadable config: {exc}") from None
    if expected_config is not None and expected_config.config_hash() != config.config_hash():
        raise IntegrityError(f"{path}: checkpoint config does not match the expected config")
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        state[name] = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
    if off != len(data):
        raise DataError(f"{path}: {len(data) - off} trailing bytes")
    model = build_model(config)
    load_state(model, state)
    return model

"""Graph convolution: the plain GCN layer and mix-hop propagation."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError
from .nn import Module, kaiming_uniform, xavier_uniform


def normalize_adjacency(A: Tensor) -> Tensor:
    """``D^-1/2 (A + I) D^-1/2`` with D the row sums of ``A + I``.

    For symmetric A this is the textbook GCN normalization; for the directed
    learned graphs the row sums play the role of degrees.  Entries stay within
    [0, 1] for symmetric A and for weights in [0, 1].
    """
    A = ad.as_tensor(A)
    n = A.shape[-1]
    A_hat = A + np.eye(n)
    inv_sqrt = A_hat.sum(axis=-1) ** -0.5
    return A_hat * inv_sqrt.reshape(n, 1) * inv_sqrt.reshape(1, n)


def symmetrize(A: Tensor) -> Tensor:
    return (A + A.T) * 0.5


class GcnLayer(Module):
    """``act(A_norm @ H @ W)``."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, activation: str | None = "relu"):
        if activation not in ("relu", None):
            raise ConfigurationError(f"unsupported activation {activation!r}")
        self.activation = activation
        if activation == "relu":
            self.weight = kaiming_uniform(rng, (n_in, n_out), n_in)
        else:
            self.weight = xavier_uniform(rng, (n_in, n_out), n_in, n_out)

    def __call__(self, A_norm: Tensor, H: Tensor) -> Tensor:
        out = A_norm @ H @ self.weight
        return ad.relu(out) if self.activation == "relu" else out


def gcn_forward(layer: GcnLayer, A_norm: Tensor, H: Tensor) -> Tensor:
    return layer(A_norm, H)


class MixHopLayer(Module):
    """Propagate ``H_h = beta H_in + (1 - beta) A_norm H_{h-1}`` for ``h = 1..depth``
    and select with one weight matrix per hop: ``sum_h H_h W_h``.
    """

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, depth: int = 2, beta: float = 0.5):
        if depth < 1:
            raise ConfigurationError(f"mix-hop depth must be >= 1, got {depth}")
        if not 0.0 <= beta <= 1.0:
            raise ConfigurationError(f"mix-hop retain ratio must lie in [0, 1], got {beta}")
        self.depth = depth
        self.beta = float(beta)
        self.weights = [xavier_uniform(rng, (n_in, n_out), n_in, n_out) for _ in range(depth + 1)]

    def hop_states(self, A_norm: Tensor, H_in: Tensor) -> list[Tensor]:
        states = [H_in]
        h = H_in
        for _ in range(self.depth):
            h = H_in * self.beta + (A_norm @ h) * (1.0 - self.beta)
            states.append(h)
        return states

    def __call__(self, A_norm: Tensor, H_in: Tensor) -> Tensor:
        out = None
        for state, w in zip(self.hop_states(A_norm, H_in), self.weights):
            term = state @ w
            out = term if out is None else out + term
        return out


def mixhop_forward(layer: MixHopLayer, A_norm: Tensor, H_in: Tensor) -> Tensor:
    return layer(A_norm, H_in)


class GCModule(Module):
    """Inflow and outflow mix-hop branches summed.

    The inflow branch propagates over the normalized learned adjacency, the
    outflow branch over its transpose, normalized on its own.
    """

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, depth: int = 2, beta: float = 0.5):
        self.inflow = MixHopLayer(rng, n_in, n_out, depth, beta)
        self.outflow = MixHopLayer(rng, n_in, n_out, depth, beta)

    def __call__(self, A: Tensor, H_in: Tensor) -> Tensor:
        A = ad.as_tensor(A)
        return self.inflow(normalize_adjacency(A), H_in) + self.outflow(normalize_adjacency(A.T), H_in)


def gc_module_forward(module: GCModule, A: Tensor, H_in: Tensor) -> Tensor:
    return module(A, H_in)

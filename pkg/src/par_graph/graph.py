"""Basic fully connected subject graph: edge affinities, node update, residual node."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Tensor, row_softmax
from .errors import InvalidArgumentError
from .nn import MlpParams, mlp_forward


@dataclass
class AffinityMatrix:
    logits: Tensor
    weights: Tensor

    @property
    def n(self) -> int:
        return self.weights.rows


@dataclass
class IndividualNodes:
    features: Tensor
    updated: Tensor
    representation: Tensor


def affinity_logits(f: Tensor, f1: MlpParams, f2: MlpParams) -> Tensor:
    if f1.spec.out_dim != f2.spec.out_dim:
        raise InvalidArgumentError("F1 and F2 must share their output dimension")
    return mlp_forward(f1, f) @ mlp_forward(f2, f).T


def normalize_affinity(logits: Tensor, additive_mask: Optional[np.ndarray] = None) -> AffinityMatrix:
    n = logits.rows
    if additive_mask is not None:
        additive_mask = np.asarray(additive_mask, dtype=np.float64)
        if additive_mask.shape != (n, n):
            raise InvalidArgumentError(
                f"mask shape {additive_mask.shape} does not match {n}x{n} affinities"
            )
    return AffinityMatrix(logits=logits, weights=row_softmax(logits, additive_mask))


def edge_affinity(
    f: Tensor, f1: MlpParams, f2: MlpParams, additive_mask: Optional[np.ndarray] = None
) -> AffinityMatrix:
    """e_uv = <F1(f_u), F2(f_v)>, plus an optional 0/-inf mask, row-softmaxed."""
    return normalize_affinity(affinity_logits(f, f1, f2), additive_mask)


def node_update(f: Tensor, affinity: AffinityMatrix, fn: MlpParams) -> Tensor:
    if affinity.n != f.rows:
        raise InvalidArgumentError(f"affinity is {affinity.n}x{affinity.n} but there are {f.rows} nodes")
    return mlp_forward(fn, affinity.weights @ f)


def individual_repr(
    f: Tensor, f_hat: Tensor, use_original: bool = True, use_updated: bool = True
) -> Tensor:
    if f.shape != f_hat.shape:
        raise InvalidArgumentError(f"shape mismatch: {f.shape} vs {f_hat.shape}")
    if use_original and use_updated:
        return f + f_hat
    if use_original:
        return f
    if use_updated:
        return f_hat
    return f * 0.0

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor
from .config import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, BCE_CLAMP
from .errors import InvalidArgumentError, NumericalError

logger = logging.getLogger(__name__)


class Activation(str, Enum):
    RELU = "relu"
    NONE = "none"
    SIGMOID = "sigmoid"


@dataclass(frozen=True)
class MlpSpec:
    layer_dims: Tuple[int, ...]
    hidden_activation: Activation = Activation.RELU
    output_activation: Activation = Activation.NONE

    def __post_init__(self) -> None:
        if len(self.layer_dims) < 2:
            raise InvalidArgumentError("an MLP needs at least one layer (two dims)")
        if any(d <= 0 for d in self.layer_dims):
            raise InvalidArgumentError(f"layer dims must be positive: {self.layer_dims}")
        if self.hidden_activation == Activation.SIGMOID:
            raise InvalidArgumentError("hidden layers use ReLU or no activation")

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class MlpParams:
    spec: MlpSpec
    weights: List[Tensor]
    biases: List[Tensor]

    def tensors(self, prefix: str) -> Iterator[Tuple[str, Tensor]]:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"{prefix}.{i}.weight", w
            yield f"{prefix}.{i}.bias", b


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_mlp(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_dims[:-1], spec.layer_dims[1:]):
        weights.append(Tensor(glorot_uniform(rng, fan_in, fan_out), requires_grad=True))
        biases.append(Tensor(np.zeros((1, fan_out)), requires_grad=True))
    return MlpParams(spec=spec, weights=weights, biases=biases)


def identity_mlp(dim: int) -> MlpParams:
    """Single linear layer computing X -> X."""
    spec = MlpSpec((dim, dim), output_activation=Activation.NONE)
    return MlpParams(
        spec=spec,
        weights=[Tensor(np.eye(dim), requires_grad=True)],
        biases=[Tensor(np.zeros((1, dim)), requires_grad=True)],
    )


def mlp_forward(params: MlpParams, x: Tensor) -> Tensor:
    spec = params.spec
    if x.data.ndim != 2 or x.cols != spec.in_dim:
        raise InvalidArgumentError(
            f"MLP expects input width {spec.in_dim}, got shape {x.data.shape}"
        )
    h = x
    last = spec.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        act = spec.output_activation if i == last else spec.hidden_activation
        if act == Activation.RELU:
            h = h.relu()
        elif act == Activation.SIGMOID:
            h = h.sigmoid()
    return h


class ParamStore:
    """Ordered name -> Tensor mapping holding every trainable tensor of a model."""

    def __init__(self, tensors: Optional[Dict[str, Tensor]] = None):
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, tensor in (tensors or {}).items():
            self.add(name, tensor)

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._tensors:
            raise InvalidArgumentError(f"duplicate parameter name: {name}")
        tensor.name = name
        tensor.requires_grad = True
        self._tensors[name] = tensor

    def add_mlp(self, prefix: str, params: MlpParams) -> None:
        for name, tensor in params.tensors(prefix):
            self.add(name, tensor)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def names(self) -> List[str]:
        return list(self._tensors)

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.grad = None

    def grads(self) -> Dict[str, np.ndarray]:
        return {
            name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
            for name, t in self._tensors.items()
        }

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def assign(self, arrays: Dict[str, np.ndarray]) -> None:
        missing = set(self._tensors) - set(arrays)
        if missing:
            raise InvalidArgumentError(f"missing tensors: {sorted(missing)}")
        for name, tensor in self._tensors.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != tensor.data.shape:
                raise InvalidArgumentError(
                    f"shape mismatch for {name}: {value.shape} != {tensor.data.shape}"
                )
            tensor.data = value.copy()


def bce_loss(pred: Tensor, target: np.ndarray, mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean binary cross entropy over the unmasked entries of `pred`.

    `mask` is True where an entry counts. Fully masked input yields 0 and a
    warning on the returned tensor.
    """
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.data.shape:
        raise InvalidArgumentError(f"bce shape mismatch: {pred.data.shape} vs {target.shape}")
    keep = np.ones(target.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    count = int(keep.sum())
    if count == 0:
        logger.warning("bce_loss: every entry is masked, loss defined as 0")
        out = Tensor(0.0)
        out.warnings = ("all_masked",)
        return out

    p = np.clip(pred.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    terms = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
    value = float(np.where(keep, terms, 0.0).sum() / count)
    inside = (pred.data >= BCE_CLAMP) & (pred.data <= 1.0 - BCE_CLAMP)
    out = pred._child(np.array(value), (pred,))

    def _bw() -> None:
        dp = (-target / p + (1.0 - target) / (1.0 - p)) / count
        pred._accumulate(out.grad * np.where(keep & inside, dp, 0.0))

    out._backward = _bw
    return out


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params: ParamStore) -> "AdamState":
        return cls(
            m={name: np.zeros_like(t.data) for name, t in params.items()},
            v={name: np.zeros_like(t.data) for name, t in params.items()},
        )


def adam_step(
    state: AdamState, params: ParamStore, grads: Dict[str, np.ndarray], lr: float
) -> None:
    """Bias-corrected Adam update applied in place to `params` and `state`."""
    for name, tensor in params.items():
        g = grads.get(name)
        if g is None or g.shape != tensor.data.shape:
            raise InvalidArgumentError(f"gradient for {name} is missing or misshaped")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in {name}", tensor=name)
        if name not in state.m:
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)

    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for name, tensor in params.items():
        g = grads[name]
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        tensor.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: ParamStore,
    eps: float = 1e-5,
    names: Optional[Sequence[str]] = None,
) -> float:
    """Max relative error between backprop and central-difference gradients.

    The error of one tensor is ||g_bp - g_fd|| / max(1e-8, ||g_bp|| + ||g_fd||).
    """
    if not 1e-6 <= eps <= 1e-4:
        raise InvalidArgumentError(f"eps must lie in [1e-6, 1e-4], got {eps}")
    params.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = params.grads()
    params.zero_grad()

    worst = 0.0
    for name in names or params.names():
        tensor = params[name]
        numeric = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = loss_fn().item()
            flat[i] = old - eps
            down = loss_fn().item()
            flat[i] = old
            numeric.reshape(-1)[i] = (up - down) / (2.0 * eps)
        g = analytic[name]
        denom = max(1e-8, float(np.linalg.norm(g) + np.linalg.norm(numeric)))
        err = float(np.linalg.norm(g - numeric)) / denom
        logger.debug("finite_diff_check %s: %.3e", name, err)
        worst = max(worst, err)
    return worst

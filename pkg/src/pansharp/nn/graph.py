"""Layer specs, parameter store and a taped DAG evaluator with reverse-mode gradients."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..errors import NoTape, ShapeMismatch, WeightShapeMismatch
from . import functional as F


@dataclass(frozen=True)
class Conv:
    in_c: int
    out_c: int
    k: int = 3
    stride: int = 1
    pad: int = 1


@dataclass(frozen=True)
class TConv:
    in_c: int
    out_c: int
    k: int = 4
    stride: int = 2
    pad: int = 1
    out_pad: int = 0


@dataclass(frozen=True)
class LeakyReLU:
    slope: float = 0.2


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Sigmoid:
    pass


@dataclass(frozen=True)
class Concat:
    """Concatenation along the channel axis."""


@dataclass(frozen=True)
class BatchNorm:
    channels: int
    eps: float = 1e-5
    momentum: float = 0.1


LayerSpec = Union[Conv, TConv, LeakyReLU, ReLU, Sigmoid, Concat, BatchNorm]
KINKED = (LeakyReLU, ReLU)


@dataclass(frozen=True)
class Node:
    name: str
    spec: LayerSpec
    inputs: tuple[str, ...]


@dataclass
class ParameterStore:
    """Named arrays plus per-parameter Adam state ``{name: (m, v, t)}``.

    Only names in ``trainable`` receive gradients; the rest (batch-norm running
    statistics) are buffers.
    """

    params: dict[str, np.ndarray] = field(default_factory=dict)
    trainable: set[str] = field(default_factory=set)
    state: dict[str, tuple[np.ndarray, np.ndarray, int]] = field(default_factory=dict)
    variant: str | None = None
    bands: int | None = None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __len__(self) -> int:
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def num_trainable(self) -> int:
        return int(sum(self.params[n].size for n in self.trainable))

    def copy(self) -> ParameterStore:
        return ParameterStore(
            params={k: v.copy() for k, v in self.params.items()},
            trainable=set(self.trainable),
            state={k: (m.copy(), v.copy(), t) for k, (m, v, t) in self.state.items()},
            variant=self.variant,
            bands=self.bands,
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name]).tobytes())
        return h.hexdigest()


class ComputeGraph:
    """A DAG of layers with named entry tensors and a parameter store.

    Nodes must be added in topological order; each node produces one tensor
    named after the node.
    """

    def __init__(self, inputs: dict[str, int], name: str = "graph"):
        self.name = name
        self.inputs = dict(inputs)
        self.nodes: list[Node] = []
        self.outputs: list[str] = []
        self.params = ParameterStore()
        self._channels: dict[str, int] = dict(inputs)
        self._tape = None

    def add(self, name: str, spec: LayerSpec, *inputs: str) -> str:
        if name in self._channels:
            raise ValueError(f"duplicate node name {name!r}")
        for src in inputs:
            if src not in self._channels:
                raise ValueError(f"node {name!r} consumes unknown tensor {src!r}")
        in_ch = [self._channels[s] for s in inputs]
        if isinstance(spec, Concat):
            if len(inputs) < 2:
                raise ValueError(f"concat node {name!r} needs >= 2 inputs")
            out_ch = sum(in_ch)
        else:
            if len(inputs) != 1:
                raise ValueError(f"node {name!r} takes exactly one input")
            if isinstance(spec, (Conv, TConv)):
                if spec.in_c != in_ch[0]:
                    raise ShapeMismatch(
                        f"node {name!r}: expects {spec.in_c} channels, gets {in_ch[0]}"
                    )
                out_ch = spec.out_c
            elif isinstance(spec, BatchNorm):
                if spec.channels != in_ch[0]:
                    raise ShapeMismatch(
                        f"node {name!r}: expects {spec.channels} channels, gets {in_ch[0]}"
                    )
                out_ch = in_ch[0]
            else:
                out_ch = in_ch[0]
        self.nodes.append(Node(name, spec, tuple(inputs)))
        self._channels[name] = out_ch
        self._declare_params(name, spec)
        return name

    def channels(self, tensor: str) -> int:
        return self._channels[tensor]

    def _declare_params(self, name: str, spec: LayerSpec) -> None:
        p = self.params
        if isinstance(spec, Conv):
            p.params[f"{name}.weight"] = np.zeros((spec.out_c, spec.in_c, spec.k, spec.k))
            p.params[f"{name}.bias"] = np.zeros(spec.out_c)
        elif isinstance(spec, TConv):
            p.params[f"{name}.weight"] = np.zeros((spec.in_c, spec.out_c, spec.k, spec.k))
            p.params[f"{name}.bias"] = np.zeros(spec.out_c)
        elif isinstance(spec, BatchNorm):
            p.params[f"{name}.gamma"] = np.ones(spec.channels)
            p.params[f"{name}.beta"] = np.zeros(spec.channels)
            p.params[f"{name}.running_mean"] = np.zeros(spec.channels)
            p.params[f"{name}.running_var"] = np.ones(spec.channels)
            p.trainable.update({f"{name}.gamma", f"{name}.beta"})
            return
        else:
            return
        p.trainable.update({f"{name}.weight", f"{name}.bias"})

    def init_params(self, rng: np.random.Generator, std: float | None = 0.02) -> ParameterStore:
        """Normal(0, std) conv weights and zero biases, in node order.

        ``std=None`` selects He scaling, ``sqrt(2 / fan_in)``.
        """
        for node in self.nodes:
            if isinstance(node.spec, (Conv, TConv)):
                w = self.params.params[f"{node.name}.weight"]
                if std is None:
                    fan_in = node.spec.in_c * node.spec.k * node.spec.k
                    if isinstance(node.spec, TConv):
                        fan_in = fan_in // (node.spec.stride ** 2)
                    scale = np.sqrt(2.0 / fan_in)
                else:
                    scale = std
                w[...] = rng.normal(0.0, scale, size=w.shape)
                self.params.params[f"{node.name}.bias"][...] = 0.0
        return self.params

    def load(self, store: ParameterStore) -> None:
        missing = set(self.params.params) ^ set(store.params)
        if missing:
            raise WeightShapeMismatch(f"parameter names differ: {sorted(missing)[:4]}")
        for name, arr in store.params.items():
            if arr.shape != self.params.params[name].shape:
                raise WeightShapeMismatch(
                    f"{name}: stored shape {arr.shape} vs graph shape {self.params.params[name].shape}"
                )
        trainable = self.params.trainable
        self.params = store
        store.trainable = set(trainable)

    def num_params(self) -> int:
        return self.params.num_trainable()

    # evaluation -----------------------------------------------------------

    def forward(self, inputs: dict[str, np.ndarray], training: bool = True,
                record: bool = True, update_stats: bool = True) -> dict[str, np.ndarray]:
        """Evaluate the graph in node order and return the declared outputs.

        ``record`` keeps a tape for :meth:`backward`; without it intermediate
        tensors are released as soon as their last consumer has run. In
        training mode batch-norm layers use batch statistics and, when
        ``update_stats`` is set, advance their running averages.
        """
        for name, ch in self.inputs.items():
            if name not in inputs:
                raise ShapeMismatch(f"{self.name}: missing input {name!r}")
            x = inputs[name]
            if x.ndim != 4 or x.shape[1] != ch:
                raise ShapeMismatch(
                    f"{self.name}: input {name!r} has shape {x.shape}, expected (N, {ch}, H, W)"
                )
        values = {k: np.asarray(inputs[k], dtype=np.float64) for k in self.inputs}
        remaining = self._consumer_counts() if not record else None
        tape = []
        for node in self.nodes:
            args = [values[s] for s in node.inputs]
            try:
                out, cache = self._eval(node, args, training, update_stats)
            except ShapeMismatch as exc:
                raise ShapeMismatch(f"{self.name} node {node.name!r}: {exc}") from None
            values[node.name] = out
            if record:
                tape.append((node, cache))
            else:
                for s in node.inputs:
                    remaining[s] -= 1
                    if remaining[s] == 0 and s not in self.outputs:
                        del values[s]
        self._tape = (tape, {k: v.shape for k, v in values.items()}) if record else None
        return {name: values[name] for name in self.outputs}

    def _consumer_counts(self) -> dict[str, int]:
        counts = {k: 0 for k in self._channels}
        for node in self.nodes:
            for s in node.inputs:
                counts[s] += 1
        for k in counts:
            if counts[k] == 0:
                counts[k] = -1
        return counts

    def _eval(self, node: Node, args, training: bool, update_stats: bool = True):
        spec, p = node.spec, self.params.params
        if isinstance(spec, Conv):
            x = args[0]
            return F.conv2d_forward(x, p[f"{node.name}.weight"], p[f"{node.name}.bias"],
                                    spec.stride, spec.pad), x
        if isinstance(spec, TConv):
            x = args[0]
            return F.tconv2d_forward(x, p[f"{node.name}.weight"], p[f"{node.name}.bias"],
                                     spec.stride, spec.pad, spec.out_pad), x
        if isinstance(spec, LeakyReLU):
            return F.leaky_relu_forward(args[0], spec.slope), args[0]
        if isinstance(spec, ReLU):
            return F.relu_forward(args[0]), args[0]
        if isinstance(spec, Sigmoid):
            y = F.sigmoid_forward(args[0])
            return y, y
        if isinstance(spec, Concat):
            if len({(a.shape[0],) + a.shape[2:] for a in args}) != 1:
                raise ShapeMismatch(f"cannot concatenate shapes {[a.shape for a in args]}")
            return np.concatenate(args, axis=1), [a.shape[1] for a in args]
        if isinstance(spec, BatchNorm):
            n = node.name
            out, cache, mean, var = F.batchnorm_forward(
                args[0], p[f"{n}.gamma"], p[f"{n}.beta"], spec.eps, training,
                p[f"{n}.running_mean"], p[f"{n}.running_var"],
            )
            if training and update_stats:
                m = args[0].shape[0] * args[0].shape[2] * args[0].shape[3]
                unbiased = var * m / (m - 1)
                p[f"{n}.running_mean"] *= 1.0 - spec.momentum
                p[f"{n}.running_mean"] += spec.momentum * mean
                p[f"{n}.running_var"] *= 1.0 - spec.momentum
                p[f"{n}.running_var"] += spec.momentum * unbiased
            return out, cache
        raise TypeError(f"unknown layer spec {spec!r}")

    def kink_signature(self) -> np.ndarray:
        """Sign pattern of every (leaky) ReLU input on the last recorded forward."""
        if self._tape is None:
            raise NoTape(f"{self.name}: no forward tape recorded")
        parts = [np.ravel(cache > 0) for node, cache in self._tape[0] if isinstance(node.spec, KINKED)]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=bool)

    def backward(self, output_grads: dict[str, np.ndarray], input_grads: bool = False):
        """Reverse pass over the last tape.

        Returns gradients for every trainable parameter, and additionally a
        dict of entry-tensor gradients when ``input_grads`` is true.
        """
        if self._tape is None:
            raise NoTape(f"{self.name}: backward called without a recorded forward")
        tape, shapes = self._tape
        p = self.params.params
        pgrads = {n: np.zeros_like(p[n]) for n in self.params.trainable}
        grads: dict[str, np.ndarray] = {}
        for name, g in output_grads.items():
            if g.shape != shapes[name]:
                raise ShapeMismatch(f"gradient for {name!r} has shape {g.shape}, expected {shapes[name]}")
            grads[name] = np.asarray(g, dtype=np.float64)

        def accumulate(name, g):
            if name in grads:
                grads[name] = grads[name] + g
            else:
                grads[name] = g

        for node, cache in reversed(tape):
            dy = grads.pop(node.name, None)
            if dy is None:
                continue
            spec, n = node.spec, node.name
            need_dx = input_grads or node.inputs[0] not in self.inputs
            if isinstance(spec, Conv):
                dx, dw, db = F.conv2d_backward(dy, cache, p[f"{n}.weight"], spec.stride, spec.pad, need_dx)
                pgrads[f"{n}.weight"] += dw
                pgrads[f"{n}.bias"] += db
                if need_dx:
                    accumulate(node.inputs[0], dx)
            elif isinstance(spec, TConv):
                dx, dw, db = F.tconv2d_backward(dy, cache, p[f"{n}.weight"], spec.stride, spec.pad, need_dx)
                pgrads[f"{n}.weight"] += dw
                pgrads[f"{n}.bias"] += db
                if need_dx:
                    accumulate(node.inputs[0], dx)
            elif isinstance(spec, LeakyReLU):
                accumulate(node.inputs[0], F.leaky_relu_backward(dy, cache, spec.slope))
            elif isinstance(spec, ReLU):
                accumulate(node.inputs[0], F.relu_backward(dy, cache))
            elif isinstance(spec, Sigmoid):
                accumulate(node.inputs[0], F.sigmoid_backward(dy, cache))
            elif isinstance(spec, Concat):
                start = 0
                for src, ch in zip(node.inputs, cache):
                    accumulate(src, dy[:, start : start + ch])
                    start += ch
            elif isinstance(spec, BatchNorm):
                dx, dgamma, dbeta = F.batchnorm_backward(dy, cache)
                pgrads[f"{n}.gamma"] += dgamma
                pgrads[f"{n}.beta"] += dbeta
                accumulate(node.inputs[0], dx)
        if input_grads:
            igrads = {k: grads.get(k, np.zeros(shapes[k])) for k in self.inputs}
            return pgrads, igrads
        return pgrads


def forward(graph: ComputeGraph, inputs: dict[str, np.ndarray], training: bool = True,
            record: bool = True, update_stats: bool = True) -> dict[str, np.ndarray]:
    return graph.forward(inputs, training=training, record=record, update_stats=update_stats)


def backward(graph: ComputeGraph, output_grads: dict[str, np.ndarray], input_grads: bool = False):
    return graph.backward(output_grads, input_grads=input_grads)

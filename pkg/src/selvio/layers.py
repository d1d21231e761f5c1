"""Parameterized layers: affine, 2-D convolution, bidirectional LSTM.

All layers are thin functions over `LayerParams`; gradients come from the
autodiff graph (the convolution carries a hand-written im2col backward).
The bidirectional LSTM keeps its two directions as separate stacks, so
the forward half of every output depends only on past inputs and the
backward half only on future inputs, at any depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Tensor,
    concat,
    matmul,
    narrow,
    parameter,
    reshape,
    sigmoid,
    tanh,
)
from .errors import ContractError, DimensionError, ParameterError
from .seeding import substream


@dataclass
class LayerParams:
    """Named weight/bias tensors for one layer plus its hyperparameters."""

    kind: str
    hyper: dict
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": t for k, t in self.tensors.items()}


@dataclass
class RecurrentState:
    """Per-layer, per-direction hidden and cell tensors (direction 0 = forward)."""

    hidden: list[list[Tensor]]
    cell: list[list[Tensor]]


def _rng_of(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(int(seed), "init")


def _uniform_fan(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def init_params(kind: str, sizes: dict, seed) -> LayerParams:
    """Build freshly initialized parameters for a layer.

    Weights are uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out));
    biases start at zero except LSTM forget gates, which start at 1.
    Deterministic given the seed.
    """
    rng = _rng_of(seed)
    if kind == "linear":
        n_in, n_out = int(sizes["in"]), int(sizes["out"])
        if n_in <= 0 or n_out <= 0:
            raise ParameterError(f"linear: sizes must be positive, got {sizes}")
        return LayerParams(
            kind="linear",
            hyper={"in": n_in, "out": n_out},
            tensors={
                "W": parameter(_uniform_fan(rng, (n_in, n_out), n_in, n_out)),
                "b": parameter(np.zeros(n_out)),
            },
        )
    if kind == "conv2d":
        ic, oc = int(sizes["in_ch"]), int(sizes["out_ch"])
        k = int(sizes["kernel"])
        stride = int(sizes.get("stride", 1))
        pad = int(sizes.get("pad", 0))
        if min(ic, oc, k, stride) <= 0 or pad < 0:
            raise ParameterError(f"conv2d: invalid sizes {sizes}")
        fan_in, fan_out = ic * k * k, oc * k * k
        return LayerParams(
            kind="conv2d",
            hyper={"in_ch": ic, "out_ch": oc, "kernel": k, "stride": stride, "pad": pad},
            tensors={
                "W": parameter(_uniform_fan(rng, (oc, ic, k, k), fan_in, fan_out)),
                "b": parameter(np.zeros(oc)),
            },
        )
    if kind == "bilstm":
        n_in, hidden = int(sizes["input"]), int(sizes["hidden"])
        layers = int(sizes.get("layers", 1))
        if min(n_in, hidden, layers) <= 0:
            raise ParameterError(f"bilstm: invalid sizes {sizes}")
        tensors: dict[str, Tensor] = {}
        for layer in range(layers):
            in_l = n_in if layer == 0 else hidden
            for d in ("f", "b"):
                w = _uniform_fan(rng, (in_l + hidden, 4 * hidden), in_l + hidden, 4 * hidden)
                bias = np.zeros(4 * hidden)
                bias[hidden:2 * hidden] = 1.0
                tensors[f"l{layer}{d}.W"] = parameter(w)
                tensors[f"l{layer}{d}.b"] = parameter(bias)
        return LayerParams(
            kind="bilstm",
            hyper={"input": n_in, "hidden": hidden, "layers": layers},
            tensors=tensors,
        )
    raise ParameterError(f"init_params: unknown layer kind {kind!r}")


# ---------------------------------------------------------------------------
# affine

def linear(params: LayerParams, x) -> Tensor:
    """x @ W + b; accepts a vector or a batch of row vectors."""
    w, b = params.tensors["W"], params.tensors["b"]
    xt = x if isinstance(x, Tensor) else Tensor(x)
    if xt.ndim not in (1, 2):
        raise DimensionError(f"linear: expected 1-D or 2-D input, got {xt.shape}")
    if xt.shape[-1] != w.shape[0]:
        raise DimensionError(
            f"linear: input size {xt.shape[-1]} does not match weight {w.shape}"
        )
    if xt.ndim == 1:
        out = matmul(reshape(xt, (1, -1)), w) + b
        return reshape(out, (w.shape[1],))
    return matmul(xt, w) + b


# ---------------------------------------------------------------------------
# convolution

def _conv_geometry(h: int, w: int, k: int, stride: int, pad: int) -> tuple[int, int]:
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    if h + 2 * pad < k or w + 2 * pad < k:
        raise DimensionError(
            f"conv2d: kernel {k}x{k} larger than padded input {h + 2 * pad}x{w + 2 * pad}"
        )
    return oh, ow


def conv2d(params: LayerParams, x) -> Tensor:
    """Cross-correlation with zero padding.

    Accepts (C, H, W) or (N, C, H, W); output spatial size is
    floor((in + 2*pad - k) / stride) + 1.
    """
    w, b = params.tensors["W"], params.tensors["b"]
    k = params.hyper["kernel"]
    stride, pad = params.hyper["stride"], params.hyper["pad"]
    xt = x if isinstance(x, Tensor) else Tensor(x)
    single = xt.ndim == 3
    if single:
        xt = reshape(xt, (1,) + xt.shape)
    if xt.ndim != 4:
        raise DimensionError(f"conv2d: expected (N,C,H,W) input, got {xt.shape}")
    if xt.shape[1] != w.shape[1]:
        raise DimensionError(
            f"conv2d: input channels {xt.shape[1]} do not match weight {w.shape}"
        )
    out = _conv_op(xt, w, b, k, stride, pad)
    return reshape(out, out.shape[1:]) if single else out


def _conv_op(x: Tensor, w: Tensor, b: Tensor, k: int, stride: int, pad: int) -> Tensor:
    from .autodiff import _node  # shared graph-node constructor

    xd, wd = x.data, w.data
    n, c, h, wdt = xd.shape
    oc = wd.shape[0]
    oh, ow = _conv_geometry(h, wdt, k, stride, pad)

    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
    cols = np.empty((n, c, k, k, oh, ow), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    cols2 = cols.reshape(n, c * k * k, oh * ow)
    w2 = wd.reshape(oc, c * k * k)
    out = np.einsum("ok,nkl->nol", w2, cols2).reshape(n, oc, oh, ow)
    out += b.data.reshape(1, oc, 1, 1)

    def bk(g):
        g2 = g.reshape(n, oc, oh * ow)
        gb = g.sum(axis=(0, 2, 3))
        gw = np.einsum("nol,nkl->ok", g2, cols2).reshape(wd.shape)
        gcols = np.einsum("ok,nol->nkl", w2, g2).reshape(n, c, k, k, oh, ow)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += gcols[:, :, i, j]
        gx = gxp[:, :, pad:pad + h, pad:pad + wdt] if pad else gxp
        return gx, gw, gb

    return _node(out, (x, w, b), bk)


# ---------------------------------------------------------------------------
# bidirectional LSTM

def _lstm_cell(w: Tensor, b: Tensor, x: Tensor, h: Tensor, c: Tensor, hidden: int):
    z = matmul(concat(x, h, axis=1), w) + b
    i = sigmoid(narrow(z, 1, 0, hidden))
    f = sigmoid(narrow(z, 1, hidden, hidden))
    g = tanh(narrow(z, 1, 2 * hidden, hidden))
    o = sigmoid(narrow(z, 1, 3 * hidden, hidden))
    c2 = f * c + i * g
    return o * tanh(c2), c2


def zero_state(params: LayerParams, batch: int = 1) -> RecurrentState:
    hidden = params.hyper["hidden"]
    layers = params.hyper["layers"]
    mk = lambda: Tensor(np.zeros((batch, hidden)))
    return RecurrentState(
        hidden=[[mk(), mk()] for _ in range(layers)],
        cell=[[mk(), mk()] for _ in range(layers)],
    )


def bilstm(params: LayerParams, sequence, h0: RecurrentState | None = None):
    """Run the bidirectional stack over `sequence`.

    Each element is (input,) or (N, input). Returns (outputs, final state)
    where outputs[t] is the concatenation of the forward and backward
    hidden vectors of the last layer at step t.
    """
    if len(sequence) == 0:
        raise ContractError("bilstm: empty sequence")
    n_in = params.hyper["input"]
    hidden = params.hyper["hidden"]
    layers = params.hyper["layers"]

    steps = [x if isinstance(x, Tensor) else Tensor(x) for x in sequence]
    was_1d = steps[0].ndim == 1
    if was_1d:
        steps = [reshape(x, (1, -1)) for x in steps]
    for x in steps:
        if x.ndim != 2 or x.shape[1] != n_in:
            raise DimensionError(
                f"bilstm: step shape {x.shape} does not match input size {n_in}"
            )
    batch = steps[0].shape[0]

    if h0 is None:
        h0 = zero_state(params, batch)
    if len(h0.hidden) != layers or h0.hidden[0][0].shape != (batch, hidden):
        raise DimensionError(
            f"bilstm: state shaped {h0.hidden[0][0].shape} x {len(h0.hidden)} layers, "
            f"expected ({batch}, {hidden}) x {layers}"
        )

    final = RecurrentState(hidden=[[None, None] for _ in range(layers)],
                           cell=[[None, None] for _ in range(layers)])
    fwd, bwd = steps, steps
    for layer in range(layers):
        wf, bf = params.tensors[f"l{layer}f.W"], params.tensors[f"l{layer}f.b"]
        wb, bb = params.tensors[f"l{layer}b.W"], params.tensors[f"l{layer}b.b"]
        h, c = h0.hidden[layer][0], h0.cell[layer][0]
        out_f = []
        for x in fwd:
            h, c = _lstm_cell(wf, bf, x, h, c, hidden)
            out_f.append(h)
        final.hidden[layer][0], final.cell[layer][0] = h, c

        h, c = h0.hidden[layer][1], h0.cell[layer][1]
        out_b = [None] * len(bwd)
        for t in range(len(bwd) - 1, -1, -1):
            h, c = _lstm_cell(wb, bb, bwd[t], h, c, hidden)
            out_b[t] = h
        final.hidden[layer][1], final.cell[layer][1] = h, c
        fwd, bwd = out_f, out_b

    outputs = [concat(f, b, axis=1) for f, b in zip(fwd, bwd)]
    if was_1d:
        outputs = [reshape(o, (2 * hidden,)) for o in outputs]
    return outputs, final

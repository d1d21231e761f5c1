"""Modality feature encoders.

The visual encoder stacks the two frames of a window channel-wise, runs a
small strided conv stack (wide receptive fields first, stride 2 early),
flattens and projects to the visual feature size. The inertial encoder
runs a bidirectional LSTM over the IMU samples and projects the
concatenated final forward/backward hidden states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat, relu, reshape
from .errors import ContractError, DimensionError, ParameterError
from .layers import LayerParams, bilstm, conv2d, init_params, linear


@dataclass
class VisualWindow:
    """Two consecutive frames, each (channels, H, W)."""

    frames: np.ndarray                          # (2, C, H, W)
    timestamps: tuple[float, float] = (0.0, 0.1)
    missing: bool = False

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4 or self.frames.shape[0] != 2:
            raise DimensionError(
                f"VisualWindow: expected (2, C, H, W) frames, got {self.frames.shape}"
            )


@dataclass
class InertialWindow:
    """IMU samples between two frames: rows of (gyro xyz rad/s, accel xyz m/s^2)."""

    samples: np.ndarray                         # (S, 6)
    dt: float = 0.01
    missing: bool = False

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[1] != 6:
            raise DimensionError(
                f"InertialWindow: expected (S, 6) samples, got {self.samples.shape}"
            )


@dataclass
class FeatureVector:
    modality: str                               # "visual" | "inertial"
    values: Tensor


@dataclass
class VisualEncoder:
    convs: list[LayerParams]
    proj: LayerParams
    frame_channels: int
    frame_size: int
    feature_size: int

    def named(self, prefix: str = "visual") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, c in enumerate(self.convs):
            out.update(c.named(f"{prefix}.conv{i}"))
        out.update(self.proj.named(f"{prefix}.proj"))
        return out


@dataclass
class InertialEncoder:
    lstm: LayerParams
    proj: LayerParams
    sample_count: int
    feature_size: int

    def named(self, prefix: str = "inertial") -> dict[str, Tensor]:
        out = self.lstm.named(f"{prefix}.lstm")
        out.update(self.proj.named(f"{prefix}.proj"))
        return out


def build_visual_encoder(
    frame_channels: int,
    frame_size: int,
    conv_channels,
    conv_kernels,
    conv_strides,
    feature_size: int,
    rng,
) -> VisualEncoder:
    if not (len(conv_channels) == len(conv_kernels) == len(conv_strides)):
        raise ParameterError("visual encoder: conv channel/kernel/stride lists disagree")
    convs = []
    in_ch = 2 * frame_channels
    side = frame_size
    for ch, k, s in zip(conv_channels, conv_kernels, conv_strides):
        convs.append(
            init_params(
                "conv2d",
                {"in_ch": in_ch, "out_ch": ch, "kernel": k, "stride": s, "pad": k // 2},
                rng,
            )
        )
        side = (side + 2 * (k // 2) - k) // s + 1
        in_ch = ch
    if side < 1:
        raise ParameterError("visual encoder: conv stack collapses the frame")
    flat = in_ch * side * side
    proj = init_params("linear", {"in": flat, "out": feature_size}, rng)
    return VisualEncoder(convs, proj, frame_channels, frame_size, feature_size)


def build_inertial_encoder(hidden: int, layers: int, sample_count: int,
                           feature_size: int, rng) -> InertialEncoder:
    lstm = init_params("bilstm", {"input": 6, "hidden": hidden, "layers": layers}, rng)
    proj = init_params("linear", {"in": 2 * hidden, "out": feature_size}, rng)
    return InertialEncoder(lstm, proj, sample_count, feature_size)


def visual_features(enc: VisualEncoder, x: Tensor) -> Tensor:
    """Batched core: (N, 2C, H, W) -> (N, n_V). No activation after the last conv."""
    h = x
    for i, conv in enumerate(enc.convs):
        h = conv2d(conv, h)
        if i < len(enc.convs) - 1:
            h = relu(h)
    h = reshape(h, (h.shape[0], -1))
    return linear(enc.proj, h)


def encode_visual(enc: VisualEncoder, w: VisualWindow) -> FeatureVector:
    expected = (2, enc.frame_channels, enc.frame_size, enc.frame_size)
    if w.frames.shape != expected:
        raise DimensionError(
            f"encode_visual: window frames {w.frames.shape}, config expects {expected}"
        )
    x = Tensor(w.frames.reshape(1, 2 * enc.frame_channels, enc.frame_size, enc.frame_size))
    out = visual_features(enc, x)
    return FeatureVector("visual", reshape(out, (enc.feature_size,)))


def inertial_features(enc: InertialEncoder, samples: np.ndarray) -> Tensor:
    """Batched core: (N, S, 6) -> (N, n_I) via final fwd/bwd states of the top layer."""
    steps = [Tensor(samples[:, t, :]) for t in range(samples.shape[1])]
    _, state = bilstm(enc.lstm, steps)
    feat = concat(state.hidden[-1][0], state.hidden[-1][1], axis=1)
    return linear(enc.proj, feat)


def encode_inertial(enc: InertialEncoder, w: InertialWindow) -> FeatureVector:
    if w.samples.shape[0] != enc.sample_count:
        raise ContractError(
            f"encode_inertial: {w.samples.shape[0]} samples, config expects {enc.sample_count}"
        )
    out = inertial_features(enc, w.samples[None, :, :])
    return FeatureVector("inertial", reshape(out, (enc.feature_size,)))

"""Fusion of visual and inertial feature vectors.

Three strategies over the concatenated feature space:

* direct   - plain concatenation, no selection;
* soft     - deterministic sigmoid masks conditioned on both modalities,
             multiplied elementwise into the features;
* hard     - stochastic binary gates with per-feature Bernoulli keep
             probabilities, relaxed through a two-category Gumbel-Softmax
             during training and sampled as Gumbel-max argmax binaries at
             evaluation time.

All mask math runs inside the autodiff graph so the selection networks
train end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, clip, concat, log, sigmoid
from .errors import ContractError, DimensionError, ParameterError
from .layers import LayerParams, init_params, linear

PROB_EPS = 1e-12  # log-domain safety clamp for probabilities

_SOFT = "soft"
_HARD_RELAXED = "hard-relaxed"
_HARD_BINARY = "hard-binary"


@dataclass
class MaskProbabilities:
    """Per-feature Bernoulli keep probabilities for each modality."""

    alpha_V: Tensor
    alpha_I: Tensor


@dataclass
class FusionMask:
    s_V: Tensor
    s_I: Tensor
    mode: str  # soft | hard-relaxed | hard-binary


@dataclass
class FusedFeature:
    values: Tensor


@dataclass
class HardFusionConfig:
    """Temperature schedule and evaluation behaviour for hard fusion."""

    tau_start: float = 1.0
    tau_end: float = 0.5
    decay_steps: int = 1000
    eval_mode: str = "argmax-binary"  # argmax-binary | sample
    straight_through: bool = False

    def __post_init__(self):
        if not (self.tau_start > 0 and self.tau_end > 0):
            raise ParameterError("HardFusionConfig: temperatures must be > 0")
        if self.tau_end > self.tau_start:
            raise ParameterError("HardFusionConfig: tau_end must not exceed tau_start")
        if self.decay_steps < 1:
            raise ParameterError("HardFusionConfig: decay_steps must be >= 1")
        if self.eval_mode not in ("argmax-binary", "sample"):
            raise ParameterError(
                f"HardFusionConfig: eval_mode {self.eval_mode!r} not in (argmax-binary, sample)"
            )

    def tau_at(self, step: int) -> float:
        """Exponential decay from tau_start to tau_end over decay_steps."""
        frac = min(max(step, 0) / self.decay_steps, 1.0)
        return self.tau_start * (self.tau_end / self.tau_start) ** frac


@dataclass
class MaskNet:
    """One affine map per modality over the concatenated features."""

    vis: LayerParams
    ine: LayerParams

    def named(self, prefix: str = "mask") -> dict[str, Tensor]:
        out = self.vis.named(f"{prefix}.vis")
        out.update(self.ine.named(f"{prefix}.ine"))
        return out


def build_mask_net(n_visual: int, n_inertial: int, rng) -> MaskNet:
    joint = n_visual + n_inertial
    return MaskNet(
        vis=init_params("linear", {"in": joint, "out": n_visual}, rng),
        ine=init_params("linear", {"in": joint, "out": n_inertial}, rng),
    )


def _vals(x) -> Tensor:
    if isinstance(x, (FusedFeature,)):
        return x.values
    if hasattr(x, "values") and isinstance(getattr(x, "values"), Tensor):
        return x.values
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_lengths(a_V: Tensor, a_I: Tensor, n_V: int | None = None,
                   n_I: int | None = None) -> None:
    if n_V is not None and a_V.shape[-1] != n_V:
        raise DimensionError(f"fusion: visual feature length {a_V.shape[-1]}, expected {n_V}")
    if n_I is not None and a_I.shape[-1] != n_I:
        raise DimensionError(f"fusion: inertial feature length {a_I.shape[-1]}, expected {n_I}")
    if a_V.ndim != a_I.ndim or a_V.shape[:-1] != a_I.shape[:-1]:
        raise DimensionError(
            f"fusion: feature batch shapes disagree: {a_V.shape} vs {a_I.shape}"
        )


# ---------------------------------------------------------------------------
# direct / soft

def fuse_direct(a_V, a_I) -> FusedFeature:
    """[a_V ; a_I] - concatenation; any mixing is left to the temporal model."""
    a_V, a_I = _vals(a_V), _vals(a_I)
    _check_lengths(a_V, a_I)
    return FusedFeature(concat(a_V, a_I, axis=-1))


def _mask_logits(net: MaskNet, a_V: Tensor, a_I: Tensor) -> tuple[Tensor, Tensor]:
    joint = concat(a_V, a_I, axis=-1)
    single = joint.ndim == 1
    lv = linear(net.vis, joint)
    li = linear(net.ine, joint)
    return lv, li, single


def soft_masks(net: MaskNet, a_V, a_I) -> FusionMask:
    """Deterministic re-weighting masks: sigmoid of an affine map of [a_V; a_I]."""
    a_V, a_I = _vals(a_V), _vals(a_I)
    _check_lengths(a_V, a_I, net.vis.hyper["out"], net.ine.hyper["out"])
    lv, li, _ = _mask_logits(net, a_V, a_I)
    return FusionMask(sigmoid(lv), sigmoid(li), _SOFT)


def fuse_soft(a_V, a_I, m: FusionMask) -> FusedFeature:
    if m.mode != _SOFT:
        raise ContractError(f"fuse_soft: mask mode {m.mode!r}, expected {_SOFT!r}")
    return _gated_concat(a_V, a_I, m)


def _gated_concat(a_V, a_I, m: FusionMask) -> FusedFeature:
    a_V, a_I = _vals(a_V), _vals(a_I)
    _check_lengths(a_V, a_I)
    if m.s_V.shape != a_V.shape or m.s_I.shape != a_I.shape:
        raise DimensionError(
            f"fusion: mask shapes {m.s_V.shape}/{m.s_I.shape} do not match "
            f"features {a_V.shape}/{a_I.shape}"
        )
    return FusedFeature(concat(a_V * m.s_V, a_I * m.s_I, axis=-1))


# ---------------------------------------------------------------------------
# hard (stochastic)

def mask_probabilities(net: MaskNet, a_V, a_I) -> MaskProbabilities:
    """Bernoulli keep probabilities: sigmoid of an affine map of [a_V; a_I]."""
    a_V, a_I = _vals(a_V), _vals(a_I)
    _check_lengths(a_V, a_I, net.vis.hyper["out"], net.ine.hyper["out"])
    lv, li, _ = _mask_logits(net, a_V, a_I)
    return MaskProbabilities(sigmoid(lv), sigmoid(li))


def gumbel_from_uniform(u: np.ndarray) -> np.ndarray:
    """-log(-log(u)) with u clamped to [1e-12, 1 - 1e-12]."""
    u = np.clip(np.asarray(u, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    return -np.log(-np.log(u))


def gumbel_noise(shape, rng: np.random.Generator) -> Tensor:
    """I.i.d. standard Gumbel samples as a constant tensor."""
    return Tensor(gumbel_from_uniform(rng.uniform(size=shape)))


def gumbel_softmax_gate(pi, eps_pair, tau: float) -> Tensor:
    """Keep-coordinate of the two-category Gumbel-Softmax over (keep, drop).

    Equals sigmoid((log pi - log(1 - pi) + eps_keep - eps_drop) / tau) and
    is differentiable in pi. `eps_pair` is (eps_keep, eps_drop), each
    shaped like pi.
    """
    if not np.isfinite(tau) or tau <= 0.0:
        raise ParameterError(f"gumbel_softmax_gate: tau must be > 0, got {tau}")
    pi = pi if isinstance(pi, Tensor) else Tensor(pi)
    eps_keep, eps_drop = (e if isinstance(e, Tensor) else Tensor(e) for e in eps_pair)
    if eps_keep.shape != pi.shape or eps_drop.shape != pi.shape:
        raise DimensionError(
            f"gumbel_softmax_gate: noise shapes {eps_keep.shape}/{eps_drop.shape} "
            f"do not match pi {pi.shape}"
        )
    p = clip(pi, PROB_EPS, 1.0 - PROB_EPS)
    logit = log(p) - log(1.0 - p)
    return sigmoid((logit + eps_keep - eps_drop) * (1.0 / tau))


def _binary_keep(pi: np.ndarray, eps_keep: np.ndarray, eps_drop: np.ndarray) -> np.ndarray:
    # Gumbel-max over (keep, drop): an exact Bernoulli(pi) sample.
    p = np.clip(pi, PROB_EPS, 1.0 - PROB_EPS)
    return (np.log(p) + eps_keep >= np.log1p(-p) + eps_drop).astype(np.float64)


def hard_masks(net: MaskNet, a_V, a_I, cfg: HardFusionConfig,
               rng: np.random.Generator, *, training: bool = True,
               tau: float | None = None) -> FusionMask:
    """Sample hard-fusion gates for both modalities.

    Training: relaxed Gumbel-Softmax gates at temperature `tau` (defaults
    to cfg.tau_start). Evaluation: argmax-binary Gumbel-max samples, or
    relaxed samples when cfg.eval_mode == "sample". Deterministic given
    the rng state; noise is drawn as keep/drop for visual then inertial.
    """
    probs = mask_probabilities(net, a_V, a_I)
    tau = cfg.tau_start if tau is None else tau
    if not np.isfinite(tau) or tau <= 0.0:
        raise ParameterError(f"hard_masks: tau must be > 0, got {tau}")

    noise = []
    for alpha in (probs.alpha_V, probs.alpha_I):
        keep = gumbel_from_uniform(rng.uniform(size=alpha.shape))
        drop = gumbel_from_uniform(rng.uniform(size=alpha.shape))
        noise.append((keep, drop))

    if training or cfg.eval_mode == "sample":
        gates = [
            gumbel_softmax_gate(alpha, pair, tau)
            for alpha, pair in zip((probs.alpha_V, probs.alpha_I), noise)
        ]
        if training and cfg.straight_through:
            hardened = []
            for alpha, pair, soft in zip((probs.alpha_V, probs.alpha_I), noise, gates):
                b = Tensor(_binary_keep(alpha.data, *pair))
                hardened.append(soft + (b - soft.detach()))
            return FusionMask(hardened[0], hardened[1], _HARD_BINARY)
        return FusionMask(gates[0], gates[1], _HARD_RELAXED)

    s_v = Tensor(_binary_keep(probs.alpha_V.data, *noise[0]))
    s_i = Tensor(_binary_keep(probs.alpha_I.data, *noise[1]))
    return FusionMask(s_v, s_i, _HARD_BINARY)


def fuse_hard(a_V, a_I, m: FusionMask) -> FusedFeature:
    if m.mode not in (_HARD_RELAXED, _HARD_BINARY):
        raise ContractError(f"fuse_hard: mask mode {m.mode!r} is not a hard mode")
    return _gated_concat(a_V, a_I, m)

"""Dense network machinery: MLPs with hand-derived backprop, a decoupled
weight-decay adaptive-moment optimizer, and the dual-head voxel model.

No autodiff anywhere: every forward pass returns a cache and every backward
pass consumes it, so all gradients can be checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import NumericalError, ValidationError

SOFTPLUS_BETA = 10.0
ACTIVATIONS = ("softplus", "ramp")


def _act(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "softplus":
        return np.logaddexp(0.0, SOFTPLUS_BETA * x) / SOFTPLUS_BETA
    return np.maximum(0.0, x)


def _act_grad(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "softplus":
        return expit(SOFTPLUS_BETA * x)
    return (x > 0.0).astype(np.float64)


class MLP:
    """Affine layers with the activation between them (none after the last).

    Parameters live in self.params as [w0, b0, w1, b1, ...]; backward returns
    gradients in the same order.
    """

    def __init__(self, params: list[np.ndarray], activation: str = "softplus"):
        if activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {activation!r}")
        if len(params) < 2 or len(params) % 2 != 0:
            raise ValidationError("params must be [w, b] pairs")
        for i in range(0, len(params) - 2, 2):
            if params[i].shape[1] != params[i + 2].shape[0]:
                raise ValidationError(
                    f"layer {i // 2} outputs {params[i].shape[1]} "
                    f"but layer {i // 2 + 1} expects {params[i + 2].shape[0]}"
                )
        for w, b in zip(params[0::2], params[1::2]):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValidationError("weights must be (in, out), bias (out,)")
        self.params = [np.asarray(p, dtype=np.float64) for p in params]
        self.activation = activation

    @staticmethod
    def create(widths: list[int], rng: np.random.Generator,
               activation: str = "softplus") -> "MLP":
        if len(widths) < 2:
            raise ValidationError("need at least input and output widths")
        params = []
        for cin, cout in zip(widths[:-1], widths[1:]):
            params.append(rng.standard_normal((cin, cout)) * np.sqrt(2.0 / cin))
            params.append(np.zeros(cout))
        return MLP(params, activation)

    @property
    def in_width(self) -> int:
        return self.params[0].shape[0]

    @property
    def out_width(self) -> int:
        return self.params[-2].shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_width:
            raise ValidationError(
                f"input must be (N, {self.in_width}), got {x.shape}")
        pre = []
        h = x
        inputs = []
        for layer in range(self.n_layers):
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            inputs.append(h)
            z = h @ w + b
            pre.append(z)
            h = _act(z, self.activation) if layer < self.n_layers - 1 else z
        return h, {"inputs": inputs, "pre": pre}

    def backward(self, cache, dy: np.ndarray):
        """Gradients of a scalar loss given d loss/d output. Returns
        (d loss/d input, [dw0, db0, ...])."""
        grads: list[np.ndarray] = [None] * len(self.params)
        g = np.asarray(dy, dtype=np.float64)
        for layer in reversed(range(self.n_layers)):
            if layer < self.n_layers - 1:
                g = g * _act_grad(cache["pre"][layer], self.activation)
            h = cache["inputs"][layer]
            grads[2 * layer] = h.T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            g = g @ self.params[2 * layer].T
        return g, grads

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]


@dataclass(frozen=True)
class OptimizerParams:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float = 1.0

    def __post_init__(self):
        if not 0 < self.lr:
            raise ValidationError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("betas must be in [0, 1)")
        if self.eps <= 0 or self.clip_norm <= 0:
            raise ValidationError("eps and clip_norm must be positive")
        if self.weight_decay < 0:
            raise ValidationError("weight decay must be non-negative")


class AdamW:
    """Adaptive moments with decoupled weight decay and a global-norm clip
    applied to the raw gradients before the moment updates."""

    def __init__(self, params: list[np.ndarray], opt: OptimizerParams):
        self.opt = opt
        self.params = params
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> float:
        """Apply one update in place; returns the pre-clip gradient norm."""
        if len(grads) != len(self.params):
            raise ValidationError("gradient list does not match parameters")
        o = self.opt
        total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
        if not np.isfinite(total):
            raise NumericalError("non-finite gradient")
        scale = 1.0 if total <= o.clip_norm else o.clip_norm / total
        self.t += 1
        bc1 = 1.0 - o.beta1 ** self.t
        bc2 = 1.0 - o.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g * scale
            m *= o.beta1
            m += (1 - o.beta1) * g
            v *= o.beta2
            v += (1 - o.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + o.eps)
            p -= o.lr * (update + o.weight_decay * p)
        return total


@dataclass
class ModelOutputs:
    features: np.ndarray
    occ_logits: np.ndarray
    v_text: np.ndarray
    caches: dict = field(repr=False, default_factory=dict)


class DualHeadModel:
    """Per-voxel feature net feeding an occupancy head and a language head."""

    def __init__(self, feature_net: MLP, occ_head: MLP, lang_head: MLP):
        cv = feature_net.out_width
        if occ_head.in_width != cv or lang_head.in_width != cv:
            raise ValidationError(
                f"heads must consume the feature width {cv}, got "
                f"{occ_head.in_width} and {lang_head.in_width}")
        self.feature_net = feature_net
        self.occ_head = occ_head
        self.lang_head = lang_head

    @staticmethod
    def create(c_in: int, c_v: int, n_occ_classes: int, c_o: int,
               seed: int, hidden: int = 64,
               activation: str = "softplus") -> "DualHeadModel":
        streams = np.random.SeedSequence(seed).spawn(3)
        return DualHeadModel(
            MLP.create([c_in, hidden, c_v],
                       np.random.default_rng(streams[0]), activation),
            MLP.create([c_v, hidden, n_occ_classes],
                       np.random.default_rng(streams[1]), activation),
            MLP.create([c_v, hidden, c_o],
                       np.random.default_rng(streams[2]), activation),
        )

    @property
    def parameters(self) -> list[np.ndarray]:
        return (self.feature_net.params + self.occ_head.params
                + self.lang_head.params)

    @property
    def n_occ_classes(self) -> int:
        return self.occ_head.out_width

    @property
    def c_o(self) -> int:
        return self.lang_head.out_width

    def forward(self, x: np.ndarray) -> ModelOutputs:
        feats, c_feat = self.feature_net.forward(x)
        occ, c_occ = self.occ_head.forward(feats)
        text, c_text = self.lang_head.forward(feats)
        return ModelOutputs(feats, occ, text,
                            {"feat": c_feat, "occ": c_occ, "text": c_text})

    def backward(self, outs: ModelOutputs, d_occ: np.ndarray,
                 d_text: np.ndarray) -> list[np.ndarray]:
        """Gradients for all parameters given head-output gradients."""
        d_feat_occ, g_occ = self.occ_head.backward(outs.caches["occ"], d_occ)
        d_feat_text, g_text = self.lang_head.backward(outs.caches["text"], d_text)
        _, g_feat = self.feature_net.backward(
            outs.caches["feat"], d_feat_occ + d_feat_text)
        return g_feat + g_occ + g_text

"""Rectification network: backbone, local module, multi-layer convolutions,
global module, head and decoder, cascaded local-then-global.

Consumes an image concatenated with a predicted per-pixel mask
distribution and emits corrected category logits at input resolution.
The cascade order is fixed: local channel weights rescale the backbone
features, multi-layer convolutions map them to category channels, then
global channel weights rescale those. The reasoned global nodes can
additionally assist the local weighting, which is realized by a second
local/global pass fed with the first pass's global nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DataError
from .graph import resymmetrize_
from .gsm import GsmParams, GsmResult, gsm_forward, init_gsm_params
from .layers import (bias, conv_block, conv1x1, he_kernel, linear_weight,
                     with_coords)
from .lcm import LcmParams, LcmResult, init_lcm_params, lcm_forward
from .optim import SgdState, sgd_step, zero_grads
from .segnet import _check_size, channel_softmax
from .tensor import (Tensor, backward, channel_scale, cross_entropy_pixelwise,
                     upsample_nearest)


@dataclass
class RectNetParams:
    b1_k: Tensor
    b1_b: Tensor
    b2_k: Tensor
    b2_b: Tensor
    b3_k: Tensor
    b3_b: Tensor
    b4_k: Tensor
    b4_b: Tensor
    lcm: LcmParams
    phi1_k: Tensor
    phi1_b: Tensor
    phi2_k: Tensor
    phi2_b: Tensor
    gsm: GsmParams
    head_w: Tensor
    head_b: Tensor
    dec1_k: Tensor
    dec1_b: Tensor
    dec2_k: Tensor
    dec2_b: Tensor
    c: int
    cprime: int
    width: int
    height: int
    width_px: int
    two_pass_assist: bool = True
    use_coords: bool = True

    def named(self, prefix: str = "rect") -> list[tuple[str, Tensor]]:
        fields = ["b1_k", "b1_b", "b2_k", "b2_b", "b3_k", "b3_b", "b4_k", "b4_b",
                  "phi1_k", "phi1_b", "phi2_k", "phi2_b",
                  "head_w", "head_b", "dec1_k", "dec1_b", "dec2_k", "dec2_b"]
        out = [(f"{prefix}.{f}", getattr(self, f)) for f in fields]
        out += self.lcm.named(f"{prefix}.lcm")
        out += self.gsm.named(f"{prefix}.gsm")
        return out


def init_rectnet(c: int, height: int, width_px: int, d: int = 64,
                 n_high: int = 3, cprime: int = 16, width: int = 16,
                 alpha: float = 1.0, seed: int = 0,
                 two_pass_assist: bool = True,
                 use_coords: bool = True) -> RectNetParams:
    """Fresh parameters for inputs of size (3+c) x height x width_px."""
    _check_size(height, width_px)
    rng = np.random.default_rng([seed, 202])
    cin = 3 + c + (2 if use_coords else 0)
    wh = (height // 4) * (width_px // 4)
    return RectNetParams(
        b1_k=he_kernel(rng, width, cin), b1_b=bias(width),
        b2_k=he_kernel(rng, width, width), b2_b=bias(width),
        b3_k=he_kernel(rng, width, width), b3_b=bias(width),
        b4_k=he_kernel(rng, cprime, width), b4_b=bias(cprime),
        lcm=init_lcm_params(c, cprime, wh, d, rng, alpha=alpha),
        phi1_k=he_kernel(rng, cprime, cprime), phi1_b=bias(cprime),
        phi2_k=he_kernel(rng, c, cprime), phi2_b=bias(c),
        gsm=init_gsm_params(c, d, n_high, wh, rng),
        head_w=linear_weight(rng, c, c), head_b=bias(c),
        dec1_k=he_kernel(rng, c, c), dec1_b=bias(c),
        dec2_k=he_kernel(rng, c, c), dec2_b=bias(c),
        c=c, cprime=cprime, width=width, height=height, width_px=width_px,
        two_pass_assist=two_pass_assist, use_coords=use_coords)


def assemble_input(image: np.ndarray, mask_probs: np.ndarray) -> Tensor:
    """Concatenate image channels with a per-pixel mask distribution.

    Each pixel's mask channel vector must sum to 1 within 1e-5 (hard
    one-hot masks qualify).
    """
    image = np.asarray(image, dtype=np.float64)
    mask_probs = np.asarray(mask_probs, dtype=np.float64)
    if image.ndim != 3 or mask_probs.ndim != 3:
        raise DataError("image and mask must be rank-3 stacks")
    if image.shape[1:] != mask_probs.shape[1:]:
        raise DataError(
            f"spatial sizes disagree: image {list(image.shape)}, mask {list(mask_probs.shape)}")
    sums = mask_probs.sum(axis=0)
    if np.abs(sums - 1.0).max() > 1e-5:
        raise DataError("mask channels are not per-pixel distributions")
    return Tensor(np.concatenate([image, mask_probs], axis=0))


def split_input(assembled: Tensor, c: int) -> tuple[np.ndarray, np.ndarray]:
    """Recover (image, mask) from an assembled input, bitwise."""
    data = assembled.data
    return data[:-c].copy(), data[-c:].copy()


@dataclass
class RectifyResult:
    logits: Tensor
    theta_local: Tensor
    theta_global: Tensor
    features: Tensor = field(repr=False, default=None)        # backbone output F
    local_scaled: Tensor = field(repr=False, default=None)    # weights applied to F
    head_features: Tensor = field(repr=False, default=None)   # post-convolution map
    head_rectified: Tensor = field(repr=False, default=None)  # after global weights
    local_nodes: Tensor = field(repr=False, default=None)
    global_nodes: Tensor = field(repr=False, default=None)


def _backbone(x: Tensor, p: RectNetParams) -> Tensor:
    x = conv_block(x, p.b1_k, p.b1_b, stride=1)
    x = conv_block(x, p.b2_k, p.b2_b, stride=2)
    x = conv_block(x, p.b3_k, p.b3_b, stride=1)
    return conv_block(x, p.b4_k, p.b4_b, stride=2)


def _phi(x: Tensor, p: RectNetParams) -> Tensor:
    return conv_block(conv_block(x, p.phi1_k, p.phi1_b), p.phi2_k, p.phi2_b,
                      activate=False)


def _decode(x: Tensor, p: RectNetParams) -> Tensor:
    x = conv1x1(x, p.head_w, p.head_b)
    x = conv_block(upsample_nearest(x), p.dec1_k, p.dec1_b)
    return conv_block(upsample_nearest(x), p.dec2_k, p.dec2_b, activate=False)


def _prepare(inp: Tensor, p: RectNetParams) -> Tensor:
    if inp.data.ndim != 3 or inp.shape[0] != 3 + p.c:
        raise ContractError(
            f"expected [{3 + p.c},H,W] assembled input, got {list(inp.shape)}")
    _check_size(inp.shape[1], inp.shape[2])
    return Tensor(with_coords(inp.data)) if p.use_coords else inp


def _cascade(f: Tensor, p: RectNetParams,
             assist: Tensor | None) -> tuple[LcmResult, Tensor, GsmResult]:
    local = lcm_forward(f, p.lcm, global_nodes=assist)
    head = _phi(local.rectified, p)
    glob = gsm_forward(head, p.gsm)
    return local, head, glob


def rectify_forward(inp: Tensor, p: RectNetParams,
                    force_local_weights: np.ndarray | None = None,
                    force_global_weights: np.ndarray | None = None) -> RectifyResult:
    """Corrected logits for an assembled image+mask input.

    The force_* hooks replace the channel weights actually applied at
    each stage (the reasoning still runs); forcing both to ones makes the
    output bitwise equal to `plain_forward`.
    """
    x = _prepare(inp, p)
    f = _backbone(x, p)

    if force_local_weights is not None or force_global_weights is not None:
        fl = Tensor(np.ones(p.cprime) if force_local_weights is None
                    else np.asarray(force_local_weights, dtype=np.float64))
        local = lcm_forward(f, p.lcm)
        local_scaled = channel_scale(fl, f)
        head = _phi(local_scaled, p)
        glob = gsm_forward(head, p.gsm)
        fg = Tensor(np.ones(p.c) if force_global_weights is None
                    else np.asarray(force_global_weights, dtype=np.float64))
        head_rect = channel_scale(fg, head)
        logits = _decode(head_rect, p)
        return RectifyResult(logits=logits, theta_local=local.theta,
                             theta_global=glob.theta, features=f,
                             local_scaled=local_scaled, head_features=head,
                             head_rectified=head_rect,
                             local_nodes=local.nodes, global_nodes=glob.nodes)

    local, head, glob = _cascade(f, p, assist=None)
    if p.two_pass_assist:
        local, head, glob = _cascade(f, p, assist=glob.nodes)
    logits = _decode(glob.rectified, p)
    return RectifyResult(logits=logits, theta_local=local.theta,
                         theta_global=glob.theta, features=f,
                         local_scaled=local.rectified, head_features=head,
                         head_rectified=glob.rectified,
                         local_nodes=local.nodes, global_nodes=glob.nodes)


def plain_forward(inp: Tensor, p: RectNetParams) -> Tensor:
    """The rectification-free path: backbone, convolutions, head, decoder."""
    f = _backbone(_prepare(inp, p), p)
    return _decode(_phi(f, p), p)


def rectify_mask(image: np.ndarray, mask_probs: np.ndarray,
                 p: RectNetParams) -> np.ndarray:
    """Corrected argmax label map for one sample."""
    result = rectify_forward(assemble_input(image, mask_probs), p)
    return np.argmax(result.logits.data, axis=0).astype(np.int64)


def format_diagnostics(result: RectifyResult) -> str:
    """Channel weights of both modules as inspectable text."""
    lines = ["theta_local\t" + "\t".join(f"{v:.9f}" for v in result.theta_local.data),
             "theta_global\t" + "\t".join(f"{v:.9f}" for v in result.theta_global.data)]
    return "\n".join(lines) + "\n"


def train_rectifier(triples: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
                    p: RectNetParams, state: SgdState, epochs: int,
                    rng: np.random.Generator) -> list[float]:
    """Train on (image, mask_probs, true_label) triples; returns per-epoch
    mean loss. The trainable low-level adjacency is re-symmetrized after
    every update to keep the global graph undirected."""
    if not triples:
        raise ConfigError("rectifier training corpus is empty")
    params = p.named()
    log: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(triples))
        total = 0.0
        for idx in order:
            image, mask_probs, label = triples[idx]
            zero_grads(params)
            result = rectify_forward(assemble_input(image, mask_probs), p)
            loss = cross_entropy_pixelwise(result.logits, label)
            backward(loss)
            sgd_step(params, state)
            resymmetrize_(p.gsm.A_low)
            total += float(loss.data)
        log.append(total / len(triples))
    return log


def pseudo_probs(labels: np.ndarray, c: int) -> np.ndarray:
    """One-hot encoding of a hard label map as a [c,H,W] distribution."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= c:
        raise DataError(f"label ids must lie in [0, {c})")
    out = np.zeros((c,) + labels.shape)
    np.put_along_axis(out, labels[None], 1.0, axis=0)
    return out

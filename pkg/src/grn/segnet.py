"""Toy segmentation network: encoder/decoder with a pointwise head.

Consumes a [3,H,W] image (H, W divisible by 4, at least 16) and emits
per-category logits at the input resolution. Stands in for the large
parsing backbones at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .layers import (bias, conv_block, conv1x1, he_kernel, linear_weight,
                     with_coords)
from .optim import SgdState, sgd_step, zero_grads
from .tensor import Tensor, backward, cross_entropy_pixelwise, upsample_nearest


@dataclass
class SegNetParams:
    enc1_k: Tensor
    enc1_b: Tensor
    enc2_k: Tensor
    enc2_b: Tensor
    enc3_k: Tensor
    enc3_b: Tensor
    dec1_k: Tensor
    dec1_b: Tensor
    dec2_k: Tensor
    dec2_b: Tensor
    head_w: Tensor
    head_b: Tensor
    c: int
    width: int
    use_coords: bool = True

    def named(self, prefix: str = "seg") -> list[tuple[str, Tensor]]:
        fields = ["enc1_k", "enc1_b", "enc2_k", "enc2_b", "enc3_k", "enc3_b",
                  "dec1_k", "dec1_b", "dec2_k", "dec2_b", "head_w", "head_b"]
        return [(f"{prefix}.{f}", getattr(self, f)) for f in fields]


def init_segnet(c: int, width: int = 16, seed: int = 0,
                use_coords: bool = True) -> SegNetParams:
    rng = np.random.default_rng([seed, 101])
    cin = 3 + (2 if use_coords else 0)
    return SegNetParams(
        enc1_k=he_kernel(rng, width, cin), enc1_b=bias(width),
        enc2_k=he_kernel(rng, width, width), enc2_b=bias(width),
        enc3_k=he_kernel(rng, width, width), enc3_b=bias(width),
        dec1_k=he_kernel(rng, width, width), dec1_b=bias(width),
        dec2_k=he_kernel(rng, width, width), dec2_b=bias(width),
        head_w=linear_weight(rng, c, width), head_b=bias(c),
        c=c, width=width, use_coords=use_coords)


def _check_size(h: int, w: int) -> None:
    if h < 16 or w < 16 or h % 4 or w % 4:
        raise ContractError(
            f"image size must be >= 16 and divisible by 4, got {h}x{w}")


def seg_forward(image: Tensor | np.ndarray, p: SegNetParams) -> Tensor:
    """Per-pixel category logits [c,H,W] for a [3,H,W] image."""
    data = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if data.ndim != 3 or data.shape[0] != 3:
        raise ContractError(f"expected a [3,H,W] image, got {list(data.shape)}")
    _check_size(data.shape[1], data.shape[2])
    x = Tensor(with_coords(data) if p.use_coords else data)
    x = conv_block(x, p.enc1_k, p.enc1_b, stride=1)
    x = conv_block(x, p.enc2_k, p.enc2_b, stride=2)
    x = conv_block(x, p.enc3_k, p.enc3_b, stride=2)
    x = conv_block(upsample_nearest(x), p.dec1_k, p.dec1_b, stride=1)
    x = conv_block(upsample_nearest(x), p.dec2_k, p.dec2_b, stride=1)
    return conv1x1(x, p.head_w, p.head_b)


def channel_softmax(logits: np.ndarray) -> np.ndarray:
    """Per-pixel distribution over the channel axis (stable)."""
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def predict_mask(image, p: SegNetParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel probabilities and argmax labels (ties -> lowest index)."""
    logits = seg_forward(image, p).data
    probs = channel_softmax(logits)
    return probs, np.argmax(logits, axis=0).astype(np.int64)


def flip_horizontal(image: np.ndarray, label: np.ndarray,
                    pairs: list[tuple[int, int]]) -> tuple[np.ndarray, np.ndarray]:
    """Mirror image and label, exchanging paired left/right category ids."""
    flipped = label[:, ::-1]
    top = max([int(label.max()) if label.size else 0] + [max(p) for p in pairs] + [0])
    lut = np.arange(top + 1)
    for a, b in pairs:
        lut[a], lut[b] = b, a
    return image[:, :, ::-1].copy(), lut[flipped]


def scale_jitter(image: np.ndarray, label: np.ndarray, scale: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbor rescale then crop/pad back to the original size."""
    _, h, w = image.shape
    nh, nw = max(4, round(h * scale)), max(4, round(w * scale))
    ri = np.clip(np.floor((np.arange(nh) + 0.5) * h / nh).astype(int), 0, h - 1)
    ci = np.clip(np.floor((np.arange(nw) + 0.5) * w / nw).astype(int), 0, w - 1)
    img = image[:, ri][:, :, ci]
    lab = label[ri][:, ci]
    out_img = np.zeros_like(image)
    out_lab = np.zeros_like(label)
    if nh >= h:
        top = int(rng.integers(0, nh - h + 1))
        left = int(rng.integers(0, nw - w + 1))
        out_img[:] = img[:, top:top + h, left:left + w]
        out_lab[:] = lab[top:top + h, left:left + w]
    else:
        top = int(rng.integers(0, h - nh + 1))
        left = int(rng.integers(0, w - nw + 1))
        out_img[:, top:top + nh, left:left + nw] = img
        out_lab[top:top + nh, left:left + nw] = lab
    return out_img, out_lab


def train_segmenter(samples: list[tuple[np.ndarray, np.ndarray]],
                    p: SegNetParams, state: SgdState, epochs: int,
                    rng: np.random.Generator,
                    pairs: list[tuple[int, int]] | None = None,
                    augment: bool = True) -> list[float]:
    """Cross-entropy training over (image, label) pairs; returns per-epoch
    mean loss. Augmentation: random 0.5-1.5 rescale with crop/pad, and
    horizontal flips that swap the paired left/right ids."""
    if not samples:
        raise ConfigError("training corpus is empty")
    params = p.named()
    log: list[float] = []
    pairs = pairs or []
    for _ in range(epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        for idx in order:
            image, label = samples[idx]
            if augment:
                if rng.random() < 0.5:
                    image, label = flip_horizontal(image, label, pairs)
                scale = float(rng.uniform(0.5, 1.5))
                image, label = scale_jitter(image, label, scale, rng)
            zero_grads(params)
            loss = cross_entropy_pixelwise(seg_forward(image, p), label)
            backward(loss)
            sgd_step(params, state)
            total += float(loss.data)
        log.append(total / len(samples))
    return log

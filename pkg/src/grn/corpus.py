"""Procedural stick-figure parsing corpus with controlled error injection.

Samples are rendered as filled capsules over a noisy background: torso,
legs, arms, a tunic-like clothes region and a head, painted in that
order so later parts occlude earlier ones. Both arms share one color
and both legs share another, so telling left from right requires
position; torso and clothes colors are deliberately near-identical.
Figures occasionally miss limbs or face away from the camera (limb
sides mirrored while the semantic ids stay put).

The two injectors corrupt clean label maps with exactly the two error
families the rectifier targets: whole-part left/right swaps and small
in-part discs relabeled to a confusable category.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .netpbm import read_pgm, read_ppm, write_pgm, write_ppm

CATEGORY_NAMES = ["background", "head", "torso", "left_arm", "right_arm",
                  "left_leg", "right_leg", "clothes"]
LEFT_RIGHT_PAIRS = [(3, 4), (5, 6)]
# appearance-confusable partner of each foreground category
DEFAULT_CONFUSIONS = {1: 2, 2: 7, 3: 1, 4: 1, 5: 2, 6: 2, 7: 2}

_BASE_COLORS = np.array([
    [0.00, 0.00, 0.00],   # background (noise floor, unused directly)
    [0.90, 0.75, 0.60],   # head: skin
    [0.20, 0.35, 0.70],   # torso
    [0.85, 0.70, 0.55],   # both arms: skin-like
    [0.85, 0.70, 0.55],
    [0.30, 0.30, 0.38],   # both legs
    [0.30, 0.30, 0.38],
    [0.23, 0.38, 0.67],   # clothes: nearly the torso color
])


@dataclass
class CorpusSpec:
    n_labeled: int
    n_unlabeled: int
    size: int = 64
    c: int = 8
    seed: int = 0
    p_back_view: float = 0.2
    p_missing_limb: float = 0.1

    def __post_init__(self):
        if self.c < 4:
            raise ConfigError(
                f"need at least 4 categories (background/torso/left/right), got {self.c}")
        if self.n_labeled < 0 or self.n_unlabeled < 0 or self.size < 16:
            raise ConfigError("corpus sizes must be nonnegative and size >= 16")


@dataclass
class Sample:
    id: str
    image: np.ndarray                      # [3,H,W] float64 in [0,1]
    label: np.ndarray | None               # [H,W] int64 category ids
    split: str                             # "labeled" | "unlabeled"
    pseudo_label: np.ndarray | None = None
    rectified_label: np.ndarray | None = None


@dataclass
class Corpus:
    root: Path | None
    samples: list[Sample]
    c: int
    size: int
    pairs: list[tuple[int, int]] = field(default_factory=lambda: list(LEFT_RIGHT_PAIRS))

    def labeled(self) -> list[Sample]:
        return [s for s in self.samples if s.split == "labeled"]

    def unlabeled(self) -> list[Sample]:
        return [s for s in self.samples if s.split == "unlabeled"]


@dataclass
class Shape:
    """A rendered primitive: capsule (segment + radius) or disc."""
    category: int
    p0: tuple[float, float]
    p1: tuple[float, float]
    radius: float

    def covers(self, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
        return _capsule_mask(ys, xs, self.p0, self.p1, self.radius)


def _capsule_mask(ys, xs, p0, p1, radius):
    x0, y0 = p0
    x1, y1 = p1
    dx, dy = x1 - x0, y1 - y0
    seg2 = dx * dx + dy * dy
    if seg2 < 1e-12:
        return (xs - x0) ** 2 + (ys - y0) ** 2 <= radius * radius
    t = np.clip(((xs - x0) * dx + (ys - y0) * dy) / seg2, 0.0, 1.0)
    px, py = x0 + t * dx, y0 + t * dy
    return (xs - px) ** 2 + (ys - py) ** 2 <= radius * radius


@dataclass
class RenderedFigure:
    label: np.ndarray
    image: np.ndarray
    shapes: list[Shape]


def render_figure(rng: np.random.Generator, size: int,
                  p_back_view: float = 0.2,
                  p_missing_limb: float = 0.1) -> RenderedFigure:
    """Draw one randomized figure; shapes are returned for geometric tests."""
    H = W = size
    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)

    s = float(rng.uniform(0.75, 1.1))
    hip = np.array([rng.uniform(0.38, 0.62) * W, rng.uniform(0.55, 0.72) * H])
    lean = rng.uniform(-0.18, 0.18)
    up = np.array([np.sin(lean), -np.cos(lean)])
    torso_len = 0.30 * H * s
    shoulder = hip + torso_len * up
    head_c = shoulder + 0.11 * H * s * up
    back_view = rng.random() < p_back_view
    side_of = {"left": (1.0 if back_view else -1.0)}
    side_of["right"] = -side_of["left"]

    def limb(origin, side, spread_lo, spread_hi, length):
        phi = rng.uniform(np.radians(spread_lo), np.radians(spread_hi))
        direction = np.array([side * np.sin(phi), np.cos(phi)])
        return origin, origin + length * direction

    shapes: list[Shape] = []
    arm_len, leg_len = 0.26 * H * s, 0.30 * H * s
    shapes.append(Shape(2, tuple(hip), tuple(shoulder), 0.065 * H * s))
    for cat, side_name in ((5, "left"), (6, "right")):
        if rng.random() < p_missing_limb:
            continue
        p0, p1 = limb(hip, side_of[side_name], 4, 32, leg_len)
        shapes.append(Shape(cat, tuple(p0), tuple(p1), 0.042 * H * s))
    for cat, side_name in ((3, "left"), (4, "right")):
        if rng.random() < p_missing_limb:
            continue
        p0, p1 = limb(shoulder, side_of[side_name], 15, 75, arm_len)
        shapes.append(Shape(cat, tuple(p0), tuple(p1), 0.034 * H * s))
    tunic_top = shoulder - 0.02 * H * s * up
    tunic_bot = hip - 0.06 * H * s * up
    shapes.append(Shape(7, tuple(tunic_top), tuple(tunic_bot), 0.085 * H * s))
    shapes.append(Shape(1, tuple(head_c), tuple(head_c), 0.072 * H * s))

    label = np.zeros((H, W), dtype=np.int64)
    for shape in shapes:
        label[shape.covers(ys, xs)] = shape.category

    colors = np.clip(_BASE_COLORS + rng.normal(0.0, 0.02, size=_BASE_COLORS.shape), 0, 1)
    image = rng.uniform(0.0, 0.14, size=(3, H, W))
    fg = label > 0
    for ch in range(3):
        image[ch][fg] = colors[label[fg], ch]
    image += rng.normal(0.0, 0.02, size=image.shape)
    image = np.clip(image, 0.0, 1.0)
    # quantize so in-memory pixels match the PPM representation exactly
    image = np.round(image * 255.0) / 255.0
    return RenderedFigure(label=label, image=image, shapes=shapes)


def generate(spec: CorpusSpec) -> Corpus:
    """Deterministic corpus: sample k is a pure function of (seed, k)."""
    samples: list[Sample] = []
    total = spec.n_labeled + spec.n_unlabeled
    for k in range(total):
        rng = np.random.default_rng([spec.seed, k])
        fig = render_figure(rng, spec.size, spec.p_back_view, spec.p_missing_limb)
        split = "labeled" if k < spec.n_labeled else "unlabeled"
        samples.append(Sample(id=f"s{k:04d}", image=fig.image, label=fig.label,
                              split=split))
    return Corpus(root=None, samples=samples, c=spec.c, size=spec.size)


# ---------------------------------------------------------------------------
# error injection


def inject_global_error(label: np.ndarray, pairs: list[tuple[int, int]],
                        p_swap: float, rng: np.random.Generator) -> np.ndarray:
    """Swap whole left/right parts: with probability p_swap per pair, all
    pixels of one id become the other and vice versa."""
    if not 0.0 <= p_swap <= 1.0:
        raise ConfigError(f"p_swap must lie in [0,1], got {p_swap}")
    for pair in pairs:
        if len(pair) != 2 or pair[0] == pair[1]:
            raise ConfigError(f"pairs must hold two distinct ids, got {pair}")
    out = label.copy()
    for a, b in pairs:
        if rng.random() < p_swap:
            mask_a = label == a
            mask_b = label == b
            out[mask_a] = b
            out[mask_b] = a
    return out


def disc_offsets(radius: int) -> np.ndarray:
    """Integer offsets (dy, dx) with dy^2 + dx^2 <= radius^2."""
    r = int(radius)
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    keep = dy * dy + dx * dx <= radius * radius
    return np.stack([dy[keep], dx[keep]], axis=1)


def inject_local_error(label: np.ndarray, k_spots: int, radius: int,
                       confusion_map: dict[int, int],
                       rng: np.random.Generator) -> np.ndarray:
    """Relabel k random discs, each fully inside one foreground part, to
    that part's confusable category. Background is never touched."""
    if k_spots < 0:
        raise ConfigError(f"k_spots must be >= 0, got {k_spots}")
    present = [int(v) for v in np.unique(label) if v != 0]
    for v in present:
        if v not in confusion_map:
            raise ConfigError(f"confusion map lacks an entry for category {v}")
    out = label.copy()
    if k_spots == 0:
        return out
    offs = disc_offsets(radius)
    H, W = label.shape
    # candidate centers: disc fits inside the image and inside one part
    centers: list[tuple[int, int]] = []
    interior = np.zeros((H, W), dtype=bool)
    yy, xx = np.mgrid[radius:H - radius, radius:W - radius]
    flat_y, flat_x = yy.ravel(), xx.ravel()
    host = label[flat_y, flat_x]
    ok = host != 0
    for dy, dx in offs:
        ok &= label[flat_y + dy, flat_x + dx] == host
    interior[flat_y[ok], flat_x[ok]] = True
    centers = np.argwhere(interior)
    if len(centers) == 0:
        return out
    picks = rng.choice(len(centers), size=min(k_spots, len(centers)), replace=False)
    for pick in picks:
        cy, cx = centers[pick]
        target = confusion_map[int(label[cy, cx])]
        out[cy + offs[:, 0], cx + offs[:, 1]] = target
    return out


# ---------------------------------------------------------------------------
# on-disk layout: manifest.tsv + PPM images + PGM labels


def image_to_u8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0, 1) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def u8_to_image(rgb: np.ndarray) -> np.ndarray:
    return rgb.astype(np.float64).transpose(2, 0, 1) / 255.0


def save_corpus(root, corpus: Corpus) -> None:
    """Write images, labels, and manifest. Ground truth of unlabeled
    samples is stored too (the manifest marks the split; loaders decide
    whether they may read it)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for s in corpus.samples:
        img_name = f"{s.id}.ppm"
        write_ppm(root / img_name, image_to_u8(s.image))
        if s.label is not None:
            lab_name = f"{s.id}.pgm"
            write_pgm(root / lab_name, s.label.astype(np.uint8))
        else:
            lab_name = "-"
        lines.append(f"{s.id}\t{img_name}\t{lab_name}\t{s.split}")
    (root / "manifest.tsv").write_text("\n".join(lines) + "\n")
    (root / "meta.tsv").write_text(f"c\t{corpus.c}\nsize\t{corpus.size}\n")


def load_corpus(root, include_hidden_labels: bool = False) -> Corpus:
    """Load a corpus directory.

    By default this is the *training view*: label maps of unlabeled
    samples stay hidden (None) even when present on disk. Evaluation
    code passes include_hidden_labels=True explicitly.
    """
    root = Path(root)
    manifest = root / "manifest.tsv"
    if not manifest.exists():
        raise DataError(f"{manifest} does not exist")
    meta = dict(line.split("\t") for line in
                (root / "meta.tsv").read_text().splitlines())
    samples: list[Sample] = []
    for ln, line in enumerate(manifest.read_text().splitlines(), 1):
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(f"{manifest}:{ln}: expected 4 tab-separated fields")
        sid, img_name, lab_name, split = parts
        if split not in ("labeled", "unlabeled"):
            raise DataError(f"{manifest}:{ln}: unknown split {split!r}")
        image = u8_to_image(read_ppm(root / img_name))
        label = None
        if lab_name != "-" and (split == "labeled" or include_hidden_labels):
            label = read_pgm(root / lab_name).astype(np.int64)
        samples.append(Sample(id=sid, image=image, label=label, split=split))
    return Corpus(root=root, samples=samples, c=int(meta["c"]), size=int(meta["size"]))


def load_eval_labels(root) -> dict[str, np.ndarray]:
    """Hidden ground truth of every sample that has one, keyed by id.
    Evaluation-only access path."""
    full = load_corpus(root, include_hidden_labels=True)
    return {s.id: s.label for s in full.samples if s.label is not None}

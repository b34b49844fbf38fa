"""Synthetic shapes scenes, patch cropping, and datasets on disk.

A dataset directory holds manifest.jsonl plus images/ (P6), labels/ (P5),
graphs/ (DSL text), and vocab.txt; everything is a pure function of the
config and seed, so two runs produce byte-identical trees. Colors are
quantized to the 1/255 grid at generation time, which makes the image
round trip through PPM exact.
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .boxes import BoxEntry, BoxLayout, layout_from_json, layout_to_json
from .errors import (
    ConfigError,
    ContractError,
    DatasetError,
    GenerationError,
)
from .pnm import read_pgm, read_ppm, write_pgm, write_ppm
from .scenegraph import (
    GraphParseError,
    SceneGraph,
    Vocabulary,
    derive_scene_graph_from_layout,
    parse_scene_graph,
    serialize_scene_graph,
)

DEFAULT_HALF_SIZES = {"circle": 12, "square": 13, "triangle": 12}
DEFAULT_PALETTE = {
    "circle": (220, 60, 60),
    "square": (60, 180, 75),
    "triangle": (65, 105, 225),
}
# Required center distance by object count; tighter packing than this makes
# boxes unrecoverable from (category, relations) alone.
DEFAULT_SEPARATION = {2: 30.0, 3: 25.0}

MIN_PATCH_SIDE = 4


@dataclass
class ShapesConfig:
    """Everything the generator needs; the seed makes runs reproducible."""

    canvas: int = 64
    counts: tuple[int, int] = (2, 3)
    categories: tuple[str, ...] = ("circle", "square", "triangle")
    half_sizes: dict = field(default_factory=lambda: dict(DEFAULT_HALF_SIZES))
    size_jitter: int = 1
    palette: dict = field(default_factory=lambda: dict(DEFAULT_PALETTE))
    hue_jitter: float = 0.03
    min_separation: dict = field(default_factory=lambda: dict(DEFAULT_SEPARATION))
    distinct_categories: bool = True
    crop_fraction: tuple[float, float] = (0.15, 0.25)
    edge_policy: str = "all_pairs"
    seed: int = 0

    def __post_init__(self):
        if self.canvas < 16 or self.canvas % 8:
            raise ConfigError(f"canvas must be a multiple of 8 and at least "
                              f"16, got {self.canvas}")
        lo, hi = self.counts
        if not 1 <= lo <= hi:
            raise ConfigError(f"bad object count range {self.counts}")
        if not self.categories:
            raise ConfigError("need at least one shape category")
        unknown = set(self.categories) - set(DEFAULT_HALF_SIZES)
        if unknown:
            raise ConfigError(f"no rasterizer for categories {sorted(unknown)}")
        if self.distinct_categories and hi > len(self.categories):
            raise ConfigError(f"cannot place {hi} distinct categories out "
                              f"of {len(self.categories)}")
        if self.size_jitter < 0:
            raise ConfigError("size jitter must be >= 0")
        for name in self.categories:
            if name not in self.half_sizes:
                raise ConfigError(f"no half size for category '{name}'")
            if name not in self.palette:
                raise ConfigError(f"no palette color for category '{name}'")
            half = self.half_sizes[name] + self.size_jitter
            if self.half_sizes[name] - self.size_jitter < 2:
                raise ConfigError(f"'{name}' can shrink below 2 px half size")
            if 2 * half > self.canvas:
                raise ConfigError(f"'{name}' cannot fit the {self.canvas} px "
                                  "canvas at its largest size")
        if not 0.0 <= self.hue_jitter <= 0.5:
            raise ConfigError(f"hue jitter must be in [0, 0.5], "
                              f"got {self.hue_jitter}")
        flo, fhi = self.crop_fraction
        if not 0.0 < flo <= fhi <= 1.0:
            raise ConfigError(f"bad crop fraction range {self.crop_fraction}")

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(["background", *self.categories])

    def separation_for(self, count: int) -> float:
        if count in self.min_separation:
            return float(self.min_separation[count])
        if count < 2 or not self.min_separation:
            return 0.0
        return float(min(self.min_separation.values()))


@dataclass(eq=False)
class Sample:
    """One scene: pixels, labels, boxes, graph, and the conditioning crop."""

    image: np.ndarray  # (3, H, W) floats on the 1/255 grid
    label_map: np.ndarray  # (H, W) class indices
    boxes: BoxLayout
    graph: SceneGraph
    patch: tuple[int, int, int, int] | None  # (x, y, h, w), or None

    def patch_pixels(self) -> np.ndarray | None:
        if self.patch is None:
            return None
        x, y, h, w = self.patch
        return self.image[:, y:y + h, x:x + w]


# ------------------------------------------------------------ rasterizing


def _shape_mask(kind: str, cx: float, cy: float, half: float,
                n: int) -> np.ndarray:
    """Boolean (n, n) mask of pixel centers inside the shape."""
    rows, cols = np.mgrid[0:n, 0:n]
    px = cols + 0.5
    py = rows + 0.5
    if kind == "circle":
        return (px - cx) ** 2 + (py - cy) ** 2 <= half * half
    if kind == "square":
        return (np.abs(px - cx) <= half) & (np.abs(py - cy) <= half)
    if kind == "triangle":
        # apex up; sides close in at half a pixel per row
        drop = py - (cy - half)
        return (drop >= 0) & (drop <= 2 * half) & (np.abs(px - cx) <= drop / 2)
    raise ConfigError(f"no rasterizer for category '{kind}'")


def _jitter_color(rgb: tuple[int, int, int], hue_jitter: float,
                  rng: np.random.Generator) -> tuple[float, float, float]:
    """Rotate the hue a little, then snap back onto the 1/255 grid."""
    h, s, v = colorsys.rgb_to_hsv(*(c / 255.0 for c in rgb))
    h = (h + rng.uniform(-hue_jitter, hue_jitter)) % 1.0
    return tuple(round(c * 255.0) / 255.0 for c in colorsys.hsv_to_rgb(h, s, v))


def extract_gt_boxes(label_map: np.ndarray, vocab: Vocabulary) -> BoxLayout:
    """Tight per-class boxes: pixel min/max with an exclusive max edge.

    A class filling the full canvas maps to (0, 0, 1, 1) exactly; absent
    classes are omitted; all-background maps give an empty layout.
    """
    lm = np.asarray(label_map)
    if lm.ndim != 2:
        raise ContractError(f"label map must be 2-d, got shape {lm.shape}")
    if lm.size and (lm.min() < 0 or lm.max() >= len(vocab)):
        raise ContractError(f"label values outside [0, {len(vocab)})")
    h, w = lm.shape
    entries = []
    for k in range(1, len(vocab)):
        ys, xs = np.nonzero(lm == k)
        if ys.size == 0:
            continue
        box = (xs.min() / w, ys.min() / h, (xs.max() + 1) / w, (ys.max() + 1) / h)
        entries.append(BoxEntry(vocab.categories[k], k, box))
    return BoxLayout(entries)


# -------------------------------------------------------------- generation


def _place_centers(cfg: ShapesConfig, halves: list[int], sep: float,
                   rng: np.random.Generator) -> list[tuple[float, float]]:
    """Joint rejection sampling: redraw the whole scene until separated.

    Redrawing everything matters; fixing early centers and retrying only the
    latest can dead-end (a central first object leaves no legal second spot
    at the default separations), while joint draws always succeed eventually.
    """
    for _ in range(1000):
        pts = [(rng.uniform(h, cfg.canvas - h), rng.uniform(h, cfg.canvas - h))
               for h in halves]
        if all((ax - bx) ** 2 + (ay - by) ** 2 >= sep * sep
               for i, (ax, ay) in enumerate(pts) for bx, by in pts[:i]):
            return pts
    raise GenerationError(
        f"could not place {len(halves)} objects at separation {sep} "
        "after 1,000 attempts")


def _generate_sample(cfg: ShapesConfig, vocab: Vocabulary,
                     rng: np.random.Generator) -> Sample:
    lo, hi = cfg.counts
    count = int(rng.integers(lo, hi + 1))
    if cfg.distinct_categories:
        cat_ids = [int(c) + 1 for c in
                   rng.choice(len(cfg.categories), size=count, replace=False)]
    else:
        cat_ids = [int(c) for c in
                   rng.integers(1, len(cfg.categories) + 1, size=count)]
    halves = [cfg.half_sizes[vocab.categories[k]]
              + int(rng.integers(-cfg.size_jitter, cfg.size_jitter + 1))
              for k in cat_ids]
    centers = _place_centers(cfg, halves, cfg.separation_for(count), rng)

    size = cfg.canvas
    image = np.ones((3, size, size))
    label_map = np.zeros((size, size), dtype=np.int64)
    for k, (cx, cy), half in zip(cat_ids, centers, halves):
        name = vocab.categories[k]
        color = _jitter_color(cfg.palette[name], cfg.hue_jitter, rng)
        mask = _shape_mask(name, cx, cy, half, size)
        label_map[mask] = k
        for c in range(3):
            image[c][mask] = color[c]

    boxes = extract_gt_boxes(label_map, vocab)
    graph = derive_scene_graph_from_layout(boxes, vocab, cfg.edge_policy)
    patch = _random_patch_rect(size, size, cfg.crop_fraction, rng)
    return Sample(image, label_map, boxes, graph, patch)


def generate_shapes_dataset(cfg: ShapesConfig, n: int) -> list[Sample]:
    """n scenes on white canvases, deterministic in (cfg, n)."""
    if n < 1:
        raise ContractError(f"need at least one sample, got n={n}")
    rng = np.random.default_rng(cfg.seed)
    vocab = cfg.vocabulary()
    return [_generate_sample(cfg, vocab, rng) for _ in range(n)]


# ---------------------------------------------------------------- cropping


def _random_patch_rect(h: int, w: int, frac_range, rng: np.random.Generator):
    """(x, y, ph, pw) with integer area inside the fraction range.

    Draws an area fraction and an aspect ratio in [3/4, 4/3], rounds to
    whole pixels, and redraws when rounding pushes the area outside the
    range; clamping lets a fraction of 1 reach the full canvas exactly.
    """
    lo, hi = float(frac_range[0]), float(frac_range[1])
    if not 0.0 < lo <= hi <= 1.0:
        raise ConfigError(f"bad crop fraction range ({lo}, {hi})")
    total = h * w
    if math.sqrt(0.75 * lo * total) < MIN_PATCH_SIDE:
        raise ConfigError(
            f"canvas {w}x{h} cannot fit a {MIN_PATCH_SIDE}x{MIN_PATCH_SIDE} "
            f"patch at fraction {lo}")
    for _ in range(1000):
        area = rng.uniform(lo, hi) * total
        aspect = rng.uniform(0.75, 4.0 / 3.0)  # width over height
        ph = min(h, max(1, round(math.sqrt(area / aspect))))
        pw = min(w, max(1, round(math.sqrt(area * aspect))))
        if lo * total <= ph * pw <= hi * total:
            x = int(rng.integers(0, w - pw + 1))
            y = int(rng.integers(0, h - ph + 1))
            return (x, y, int(ph), int(pw))
    raise GenerationError(
        f"no integer patch satisfied fraction range ({lo}, {hi}) "
        "after 1,000 draws")


def crop_random_patch(sample: Sample, frac_range=(0.15, 0.25),
                      rng: np.random.Generator | None = None):
    """A fresh crop rectangle for a sample's image."""
    if rng is None:
        rng = np.random.default_rng()
    _, h, w = sample.image.shape
    return _random_patch_rect(h, w, frac_range, rng)


# ----------------------------------------------------------- files on disk


def save_dataset(samples, out_dir, vocab: Vocabulary) -> None:
    out = Path(out_dir)
    for sub in ("images", "labels", "graphs"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "vocab.txt").write_text(vocab.to_text(), encoding="utf-8")
    lines = []
    for i, s in enumerate(samples):
        stem = f"{i:04d}"
        write_ppm(out / "images" / f"{stem}.ppm", s.image)
        write_pgm(out / "labels" / f"{stem}.pgm", s.label_map)
        (out / "graphs" / f"{stem}.sg").write_text(
            serialize_scene_graph(s.graph, vocab), encoding="utf-8")
        patch = None
        if s.patch is not None:
            x, y, ph, pw = (int(v) for v in s.patch)
            patch = {"x": x, "y": y, "h": ph, "w": pw}
        lines.append(json.dumps({
            "id": stem,
            "image": f"images/{stem}.ppm",
            "labels": f"labels/{stem}.pgm",
            "graph": f"graphs/{stem}.sg",
            "patch": patch,
            "boxes": json.loads(layout_to_json(s.boxes, vocab.categories)),
        }))
    (out / "manifest.jsonl").write_text("\n".join(lines) + "\n",
                                        encoding="utf-8")


def _read_field(row: dict, key: str, line_no: int):
    if key not in row:
        raise DatasetError(f"manifest.jsonl line {line_no}: missing '{key}'")
    return row[key]


def load_dataset(root_dir) -> tuple[list[Sample], Vocabulary]:
    root = Path(root_dir)
    manifest = root / "manifest.jsonl"
    if not manifest.is_file():
        raise DatasetError(f"no manifest.jsonl under {root}")
    vocab = Vocabulary.from_file(root / "vocab.txt")
    samples = []
    for line_no, line in enumerate(
            manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            raise DatasetError(f"manifest.jsonl line {line_no}: {e}") from e

        def read_file(key, reader):
            rel = _read_field(row, key, line_no)
            path = root / rel
            if not path.is_file():
                raise DatasetError(f"manifest.jsonl line {line_no}: "
                                   f"missing file '{rel}'")
            try:
                return reader(path)
            except (DatasetError, GraphParseError, ContractError, OSError) as e:
                raise DatasetError(f"{rel}: {e}") from e

        image = read_file("image", read_ppm)
        label_map = read_file("labels", read_pgm)
        graph = read_file("graph", lambda p: parse_scene_graph(
            p.read_text(encoding="utf-8"), vocab))
        try:
            boxes = layout_from_json(json.dumps(_read_field(row, "boxes", line_no)),
                                     vocab.categories)
        except ContractError as e:
            raise DatasetError(f"manifest.jsonl line {line_no}: {e}") from e

        patch = _read_field(row, "patch", line_no)
        if patch is not None:
            try:
                patch = (int(patch["x"]), int(patch["y"]),
                         int(patch["h"]), int(patch["w"]))
            except (KeyError, TypeError) as e:
                raise DatasetError(f"manifest.jsonl line {line_no}: bad patch "
                                   f"rectangle: {e}") from e
            x, y, ph, pw = patch
            h, w = label_map.shape
            if x < 0 or y < 0 or ph < 1 or pw < 1 or y + ph > h or x + pw > w:
                raise DatasetError(f"manifest.jsonl line {line_no}: patch "
                                   f"{patch} leaves the {w}x{h} canvas")
        samples.append(Sample(image, label_map, boxes, graph, patch))
    return samples, vocab


def load_labeled_directory(root_dir, vocab: Vocabulary | None = None,
                           edge_policy: str = "nearest") -> tuple[list[Sample], Vocabulary]:
    """Ingest plain image+label pairs (no manifest), deriving boxes and graphs.

    Expects images/NAME.ppm with a matching labels/NAME.pgm; a vocab.txt in
    the directory is used when no vocabulary is passed.
    """
    root = Path(root_dir)
    if vocab is None:
        vocab = Vocabulary.from_file(root / "vocab.txt")
    img_dir = root / "images"
    if not img_dir.is_dir():
        raise DatasetError(f"no images/ directory under {root}")
    stems = sorted(p.stem for p in img_dir.glob("*.ppm"))
    if not stems:
        raise DatasetError(f"no .ppm images under {img_dir}")
    samples = []
    for stem in stems:
        label_path = root / "labels" / f"{stem}.pgm"
        if not label_path.is_file():
            raise DatasetError(f"missing label map 'labels/{stem}.pgm' "
                               f"for 'images/{stem}.ppm'")
        image = read_ppm(img_dir / f"{stem}.ppm")
        label_map = read_pgm(label_path)
        if image.shape[1:] != label_map.shape:
            raise DatasetError(f"'{stem}': image is {image.shape[1:]} but "
                               f"labels are {label_map.shape}")
        if label_map.max(initial=0) >= len(vocab):
            raise DatasetError(f"'{stem}': label values exceed the "
                               f"{len(vocab)}-class vocabulary")
        boxes = extract_gt_boxes(label_map, vocab)
        if len(boxes) == 0:
            raise DatasetError(f"'{stem}': label map is all background")
        graph = derive_scene_graph_from_layout(boxes, vocab, edge_policy)
        samples.append(Sample(image, label_map, boxes, graph, None))
    return samples, vocab


# ------------------------------------------------------------ vocabularies


def builtin_vocabulary(name: str) -> Vocabulary:
    """Vocabularies shipped with the package: shapes, helen, ccp."""
    base = resources.files("layoutforge") / "builtin_vocabs"
    path = base / f"{name}.txt"
    try:
        text = path.read_text(encoding="utf-8")
    except (FileNotFoundError, OSError):
        have = sorted(p.name[:-4] for p in base.iterdir()
                      if p.name.endswith(".txt"))
        raise ConfigError(f"unknown vocabulary '{name}'; built in: {have}") \
            from None
    return Vocabulary.from_text(text)


def display_palette(vocab: Vocabulary, overrides: dict | None = None):
    """Deterministic index -> (r, g, b) display colors; background is white."""
    overrides = overrides or {}
    colors = []
    for i, name in enumerate(vocab.categories):
        if name in overrides:
            colors.append(tuple(int(c) for c in overrides[name]))
        elif i == 0:
            colors.append((255, 255, 255))
        else:
            hue = (i - 1) * 0.618033988749895 % 1.0
            rgb = colorsys.hsv_to_rgb(hue, 0.65, 0.9)
            colors.append(tuple(round(c * 255) for c in rgb))
    return colors


def palette_text(vocab: Vocabulary, overrides: dict | None = None) -> str:
    """Sidecar palette: one 'index name r g b' line per class."""
    rows = []
    for i, (name, (r, g, b)) in enumerate(
            zip(vocab.categories, display_palette(vocab, overrides))):
        rows.append(f"{i} {name} {r} {g} {b}")
    return "\n".join(rows) + "\n"

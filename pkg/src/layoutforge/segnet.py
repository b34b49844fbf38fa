"""Stage II: warp node vectors into the pixel grid and label every pixel.

The warp builds one soft rectangle mask per object (fractional coverage at
box edges, 1 inside) and sums mask-weighted node vectors into a D channel
image; a compact residual encoder-decoder then produces per-pixel class
logits. The mask math lives in plain numpy (boxes are data here), so
gradients flow only into the node vectors, which is all training needs.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .boxes import BoxLayout
from .errors import ConfigError, ContractError, PlacementError
from .nn import Block, Conv, InstanceNorm, avg_pool2


def _axis_coverage(lo: float, hi: float, n: int) -> np.ndarray:
    """Fraction of each unit cell [i, i+1) covered by [lo*n, hi*n]."""
    lo_px, hi_px = lo * n, hi * n
    idx = np.arange(n)
    cover = np.minimum(hi_px, idx + 1) - np.maximum(lo_px, idx)
    return np.clip(cover, 0.0, 1.0)


def box_mask(box, h: int, w: int) -> np.ndarray:
    """(H, W) soft rectangle; sums to the box's pixel area exactly."""
    x0, y0, x1, y1 = box
    return np.outer(_axis_coverage(y0, y1, h), _axis_coverage(x0, x1, w))


def warp_embeddings(layout: BoxLayout, node_vecs: T.Tensor,
                    h: int, w: int) -> T.Tensor:
    """Sum of per-object mask ⊗ vector grids, shape (D, H, W).

    Overlapping boxes add; pixels under no box stay zero; a zero-area box
    contributes nothing by construction.
    """
    if h < 2 or w < 2:
        raise ConfigError(f"warp canvas must be at least 2x2, got {h}x{w}")
    n = len(layout)
    if node_vecs.shape[0] != n:
        raise ContractError(f"{node_vecs.shape[0]} node vectors for "
                            f"{n} layout entries")
    d = node_vecs.shape[1]
    if n == 0:
        return T.Tensor(np.zeros((d, h, w)))
    masks = np.stack([box_mask(e.box, h, w).reshape(-1) for e in layout])
    grid = T.matmul(T.transpose(node_vecs, (1, 0)), T.Tensor(masks))
    return T.reshape(grid, (d, h, w))


def place_patch(patch, offset_x: int, offset_y: int, h: int, w: int):
    """Patch pixels on a zero canvas plus the binary known-region mask.

    ``patch`` is a (3, ph, pw) float image or None for no conditioning.
    Returns plain (3, H, W) and (1, H, W) arrays.
    """
    canvas = np.zeros((3, h, w))
    known = np.zeros((1, h, w))
    if patch is None:
        return canvas, known
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 3 or patch.shape[0] != 3:
        raise ContractError(f"patch must be (3, h, w), got {patch.shape}")
    ph, pw = patch.shape[1], patch.shape[2]
    if ph == 0 or pw == 0:
        return canvas, known
    if offset_x < 0 or offset_y < 0 or offset_y + ph > h or offset_x + pw > w:
        raise PlacementError(
            f"{pw}x{ph} patch at ({offset_x}, {offset_y}) leaves the "
            f"{w}x{h} canvas")
    canvas[:, offset_y:offset_y + ph, offset_x:offset_x + pw] = patch
    known[0, offset_y:offset_y + ph, offset_x:offset_x + pw] = 1.0
    return canvas, known


def build_stage2_input(embedding_map: T.Tensor, patch, offset_x: int,
                       offset_y: int) -> T.Tensor:
    """Stack warped embeddings (D) + patch canvas (3) + known mask (1)."""
    d, h, w = embedding_map.shape
    canvas, known = place_patch(patch, offset_x, offset_y, h, w)
    return T.concat([embedding_map, T.Tensor(canvas), T.Tensor(known)], axis=0)


class ResBlock(Block):
    def __init__(self, name: str, channels: int, rng):
        super().__init__()
        self.c1 = Conv(f"{name}.c1", channels, channels, rng)
        self.n1 = InstanceNorm(f"{name}.n1", channels)
        self.c2 = Conv(f"{name}.c2", channels, channels, rng, gain="linear")
        self.n2 = InstanceNorm(f"{name}.n2", channels)
        self._children = [self.c1, self.n1, self.c2, self.n2]

    def __call__(self, x: T.Tensor) -> T.Tensor:
        y = self.n2(self.c2(T.relu(self.n1(self.c1(x)))))
        return T.relu(T.add(x, y))


class SegNet(Block):
    """Residual encoder-decoder emitting one logit plane per class.

    ``depth`` encoder stages (conv + 2x2 average pool) halve the grid that
    many times; the canvas must divide by 2**depth and keep a bottleneck of
    at least 2x2 (instance norm needs spatial extent).
    """

    def __init__(self, in_channels: int, n_classes: int, seed: int,
                 base: int = 8, depth: int = 3, blocks: int = 4,
                 name: str = "stage2"):
        super().__init__()
        if depth < 1 or base < 2 or blocks < 0:
            raise ConfigError(f"bad net geometry: base {base}, depth {depth}, "
                              f"blocks {blocks}")
        rng = np.random.default_rng(seed)
        self.in_channels = in_channels
        self.n_classes = n_classes
        self.depth = depth
        widths = [min(base * 2 ** i, 4 * base) for i in range(depth)]
        self.downs = []
        cin = in_channels
        for i, cout in enumerate(widths):
            conv = Conv(f"{name}.down{i}", cin, cout, rng)
            norm = InstanceNorm(f"{name}.dn{i}", cout)
            self.downs.append((conv, norm))
            self._children += [conv, norm]
            cin = cout
        self.blocks = [ResBlock(f"{name}.res{i}", cin, rng)
                       for i in range(blocks)]
        self._children += self.blocks
        self.ups = []
        for i, cout in enumerate(reversed(widths[:-1] or [widths[0]])):
            conv = Conv(f"{name}.up{i}", cin, cout, rng)
            norm = InstanceNorm(f"{name}.un{i}", cout)
            self.ups.append((conv, norm))
            self._children += [conv, norm]
            cin = cout
        if len(self.ups) < depth:  # final up back to full resolution
            conv = Conv(f"{name}.up{depth - 1}", cin, widths[0], rng)
            norm = InstanceNorm(f"{name}.un{depth - 1}", widths[0])
            self.ups.append((conv, norm))
            self._children += [conv, norm]
            cin = widths[0]
        self.head = Conv(f"{name}.head", cin, n_classes, rng, k=1,
                         gain="linear")
        self._children.append(self.head)

    def __call__(self, x: T.Tensor) -> T.Tensor:
        h, w = x.shape[-2], x.shape[-1]
        scale = 2 ** self.depth
        if h % scale or w % scale:
            raise ConfigError(f"canvas {h}x{w} must be divisible by {scale}")
        if h // scale < 2 or w // scale < 2:
            raise ConfigError(f"canvas {h}x{w} collapses below 2x2 after "
                              f"{self.depth} halvings")
        if x.shape[-3] != self.in_channels:
            raise ContractError(f"expected {self.in_channels} input channels, "
                                f"got {x.shape[-3]}")
        for conv, norm in self.downs:
            x = T.relu(norm(avg_pool2(conv(x))))
        for block in self.blocks:
            x = block(x)
        for conv, norm in self.ups:
            x = T.relu(norm(conv(T.upsample_nearest(x, 2))))
        return self.head(x)


def seg_logits_to_labels(logits: T.Tensor) -> np.ndarray:
    """Argmax class plane; ties resolve to the lowest class index."""
    return np.argmax(logits.data, axis=-3)


def seg_loss(logits: T.Tensor, labels: np.ndarray, weights) -> T.Tensor:
    """Class-weighted cross entropy averaged over all H*W pixels."""
    labels = np.asarray(labels)
    if logits.ndim != 3:
        raise ContractError(f"expected (C, H, W) logits, got {logits.shape}")
    c = logits.shape[-3]
    if labels.shape != logits.shape[-2:]:
        raise ContractError(f"label grid {labels.shape} does not match "
                            f"logits {logits.shape}")
    rows = T.transpose(T.reshape(logits, (c, labels.size)), (1, 0))
    return T.weighted_cross_entropy(rows, labels.reshape(-1), weights)


class Stage2Model(Block):
    """Warp + segmentation net bundled for checkpointing.

    Each node vector is extended with a one-hot code of its category before
    warping. The category is part of the node's identity, so the net never
    has to recover it from the learned embedding, whose class content drifts
    with whatever the box head happens to need.
    """

    def __init__(self, embed_dim: int, n_classes: int, seed: int = 0,
                 base: int = 8, depth: int = 3, blocks: int = 4):
        super().__init__()
        self.embed_dim = embed_dim
        self.n_classes = n_classes
        self.net = SegNet(embed_dim + n_classes + 4, n_classes, seed,
                          base=base, depth=depth, blocks=blocks)
        self._children = [self.net]

    def forward(self, layout: BoxLayout, node_vecs: T.Tensor, h: int, w: int,
                patch=None, offset_x: int = 0, offset_y: int = 0) -> T.Tensor:
        onehot = np.zeros((len(layout), self.n_classes))
        for i, entry in enumerate(layout.entries):
            if not 0 <= entry.category < self.n_classes:
                raise ContractError(f"category {entry.category} outside the "
                                    f"{self.n_classes}-class vocabulary")
            onehot[i, entry.category] = 1.0
        tagged = T.concat([node_vecs, T.Tensor(onehot)], axis=1)
        grid = warp_embeddings(layout, tagged, h, w)
        return self.net(build_stage2_input(grid, patch, offset_x, offset_y))

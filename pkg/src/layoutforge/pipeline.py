"""The three stages assembled into one checkpointable unit.

A Pipeline owns the box regressor, the segmentation net, the renderer,
and the training-only critics (discriminator, feature pyramid), plus the
vocabulary and canvas size, so a single .lfck file restores everything
needed to generate or to keep training.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .boxes import BoxLayout
from .boxnet import Stage1Model, predict_boxes
from .checkpoint import (
    CheckpointError,
    decode_text,
    encode_text,
    load_arrays,
    save_arrays,
)
from .errors import ConfigError, ContractError, DegenerateInputError
from .nn import Block
from .rendernet import DiscriminatorNet, FeaturePyramid, Stage3Model
from .scenegraph import SceneGraph, Vocabulary
from .segnet import Stage2Model, seg_logits_to_labels

STAGES = ("box", "seg", "img")


@dataclass
class GenerationResult:
    """Outputs of the requested stages; unrequested ones stay None."""

    boxes: BoxLayout | None = None
    labels: np.ndarray | None = None  # (H, W) class indices
    image: np.ndarray | None = None  # (3, H, W) in [0, 1]
    timings_ms: dict = field(default_factory=dict)


def normalize_stages(stages) -> tuple[str, ...]:
    """Canonically ordered, validated stage subset."""
    req = tuple(stages)
    if not req:
        raise ContractError("requested stage list is empty")
    unknown = set(req) - set(STAGES)
    if unknown:
        raise ContractError(f"unknown stages {sorted(unknown)}; "
                            f"choose from {list(STAGES)}")
    return tuple(s for s in STAGES if s in req)


class Pipeline(Block):
    """Graph -> boxes -> labels -> pixels, plus the training critics."""

    def __init__(self, vocab: Vocabulary, canvas: int = 64,
                 embed_dim: int = 128, s1_depth: int = 3,
                 seg_base: int = 8, seg_depth: int = 3, seg_blocks: int = 4,
                 gen_base: int = 8, gen_blocks: int = 2, disc_base: int = 8,
                 pyramid_base: int = 6, pyramid_levels: int = 4,
                 seed: int = 0):
        super().__init__()
        if canvas < 16 or canvas % 8:
            raise ConfigError(f"canvas must be a multiple of 8 and at "
                              f"least 16, got {canvas}")
        if canvas % 2 ** seg_depth:
            raise ConfigError(f"canvas {canvas} is not divisible by "
                              f"2^{seg_depth} for the segmentation net")
        self.vocab = vocab
        self.canvas = canvas
        self.seed = seed
        self._dims = dict(canvas=canvas, embed_dim=embed_dim,
                          s1_depth=s1_depth, seg_base=seg_base,
                          seg_depth=seg_depth, seg_blocks=seg_blocks,
                          gen_base=gen_base, gen_blocks=gen_blocks,
                          disc_base=disc_base, pyramid_base=pyramid_base,
                          pyramid_levels=pyramid_levels, seed=seed)
        n = len(vocab)
        self.stage1 = Stage1Model(n, dim=embed_dim, depth=s1_depth, seed=seed)
        self.stage2 = Stage2Model(embed_dim, n, seed=seed + 1, base=seg_base,
                                  depth=seg_depth, blocks=seg_blocks)
        self.stage3 = Stage3Model(n, seed=seed + 2, base=gen_base,
                                  blocks=gen_blocks)
        self.disc = DiscriminatorNet(seed=seed + 3, base=disc_base)
        # frozen, rebuilt from the seed rather than checkpointed
        self.pyramid = FeaturePyramid(seed=seed + 4, base=pyramid_base,
                                      levels=pyramid_levels)
        self._children = [self.stage1, self.stage2, self.stage3, self.disc]

    # ------------------------------------------------------------ inference

    def generate(self, graph: SceneGraph, patch: np.ndarray | None = None,
                 offset: tuple[int, int] = (0, 0),
                 stages=STAGES) -> GenerationResult:
        """Run the requested stages in order, feeding outputs forward.

        Earlier stages run whenever a later one needs them; the result only
        carries what was asked for.
        """
        req = normalize_stages(stages)
        if not graph.objects:
            raise DegenerateInputError("cannot generate from an empty graph")
        ox, oy = int(offset[0]), int(offset[1])
        result = GenerationResult()

        t0 = time.perf_counter()
        vecs, _ = self.stage1.forward(graph)
        layout = predict_boxes(self.stage1.head, vecs, graph)
        result.timings_ms["box"] = (time.perf_counter() - t0) * 1000.0
        if "box" in req:
            result.boxes = layout

        if "seg" in req or "img" in req:
            t0 = time.perf_counter()
            logits = self.stage2.forward(layout, vecs, self.canvas,
                                         self.canvas, patch, ox, oy)
            labels = seg_logits_to_labels(logits.numpy())
            result.timings_ms["seg"] = (time.perf_counter() - t0) * 1000.0
            if "seg" in req:
                result.labels = labels

        if "img" in req:
            t0 = time.perf_counter()
            img = self.stage3.forward(labels, patch, ox, oy)
            result.timings_ms["img"] = (time.perf_counter() - t0) * 1000.0
            result.image = img.numpy()
        return result

    # ---------------------------------------------------------- persistence

    def save(self, path, extra: dict[str, np.ndarray] | None = None) -> None:
        """One .lfck file: weights plus the metadata needed to rebuild."""
        arrays = dict(self.state_arrays())
        arrays["meta.config"] = encode_text(
            json.dumps(self._dims, sort_keys=True))
        arrays["meta.vocab"] = encode_text(self.vocab.to_text())
        for key, value in (extra or {}).items():
            if key in arrays:
                raise ContractError(f"extra entry '{key}' collides")
            arrays[key] = value
        save_arrays(path, arrays)

    @classmethod
    def load(cls, path) -> "Pipeline":
        pipe, _ = cls.load_with_extras(path)
        return pipe

    @classmethod
    def load_with_extras(cls, path) -> tuple["Pipeline", dict[str, np.ndarray]]:
        arrays = load_arrays(path)
        if "meta.config" not in arrays or "meta.vocab" not in arrays:
            raise CheckpointError(f"{path} is not a pipeline checkpoint "
                                  "(missing meta entries)")
        dims = json.loads(decode_text(arrays.pop("meta.config")))
        vocab = Vocabulary.from_text(decode_text(arrays.pop("meta.vocab")))
        pipe = cls(vocab, **dims)
        try:
            pipe.load_state_arrays(arrays)
        except ConfigError as e:
            raise CheckpointError(str(e)) from e
        known = {p.name for p in pipe.parameters()}
        extras = {k: v for k, v in arrays.items() if k not in known}
        return pipe, extras

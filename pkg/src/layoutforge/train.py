"""Curriculum training, evaluation, and run reports.

Each stage first trains separately on ground-truth inputs, then a joint
phase chains them: predicted boxes and label maps cross stage boundaries
as hard values, while node embeddings stay differentiable through the
spatial warp. All loops are single-threaded and seeded, so a (config,
seed, dataset) triple pins every logged loss and the checkpoint bytes.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .boxes import BoxLayout, box_center, box_iou
from .boxnet import box_l1_loss, predict_boxes
from .checkpoint import CheckpointError, decode_text, encode_text
from .data import Sample
from .errors import (
    ConfigError,
    ContractError,
    DatasetError,
    EvaluationError,
)
from .pipeline import Pipeline
from .rendernet import adversarial_losses, perceptual_loss, total_loss
from .scenegraph import (
    RELATIONS,
    SceneGraph,
    Vocabulary,
    augment_drop_nodes,
    derive_relation,
)
from .segnet import seg_logits_to_labels, seg_loss

TRAIN_STAGES = ("box", "seg", "img")
PSNR_CAP_DB = 99.0

HORIZONTAL = ("left_of", "right_of")
VERTICAL = ("above", "below")


@dataclass
class CurriculumSchedule:
    """Per-stage epoch counts plus the joint phase."""

    box_epochs: int = 10
    seg_epochs: int = 10
    img_epochs: int = 10
    joint_epochs: int = 10
    mode: str = "progressive"

    def __post_init__(self):
        for name in ("box_epochs", "seg_epochs", "img_epochs", "joint_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.mode not in ("progressive", "scratch"):
            raise ConfigError(f"mode must be progressive or scratch, "
                              f"got '{self.mode}'")
        if self.mode == "progressive" and not (
                self.box_epochs or self.seg_epochs or self.img_epochs):
            raise ConfigError("progressive mode needs at least one "
                              "per-stage epoch")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    embed_dim: int = 128
    lam: float = 0.01  # adversarial weight inside the image loss
    background_weight: float = 1.0
    shape_weight: float = 5.0
    node_drop_prob: float = 0.0
    embed_drop_prob: float = 0.0
    seed: int = 0
    canvas: int = 64
    s1_depth: int = 3
    seg_base: int = 8
    seg_depth: int = 3
    seg_blocks: int = 4
    gen_base: int = 8
    gen_blocks: int = 2
    disc_base: int = 8
    pyramid_base: int = 6
    pyramid_levels: int = 4
    data_dir: str = ""
    schedule: CurriculumSchedule = field(default_factory=CurriculumSchedule)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be >= 1")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.background_weight <= 0 or self.shape_weight <= 0:
            raise ConfigError("class weights must be positive")
        if not 0.0 <= self.node_drop_prob < 1.0:
            raise ConfigError("node_drop_prob must be in [0, 1)")
        if not 0.0 <= self.embed_drop_prob < 1.0:
            raise ConfigError("embed_drop_prob must be in [0, 1)")

    def class_weights(self, n_classes: int) -> np.ndarray:
        return np.array([self.background_weight]
                        + [self.shape_weight] * (n_classes - 1))

    def build_pipeline(self, vocab: Vocabulary) -> Pipeline:
        return Pipeline(
            vocab, canvas=self.canvas, embed_dim=self.embed_dim,
            s1_depth=self.s1_depth, seg_base=self.seg_base,
            seg_depth=self.seg_depth, seg_blocks=self.seg_blocks,
            gen_base=self.gen_base, gen_blocks=self.gen_blocks,
            disc_base=self.disc_base, pyramid_base=self.pyramid_base,
            pyramid_levels=self.pyramid_levels, seed=self.seed)


_SCHEDULE_KEYS = ("box_epochs", "seg_epochs", "img_epochs", "joint_epochs",
                  "mode")
_INT_KEYS = frozenset({
    "batch_size", "embed_dim", "seed", "canvas", "s1_depth", "seg_base",
    "seg_depth", "seg_blocks", "gen_base", "gen_blocks", "disc_base",
    "pyramid_base", "pyramid_levels", "box_epochs", "seg_epochs",
    "img_epochs", "joint_epochs"})
_FLOAT_KEYS = frozenset({"learning_rate", "lam", "background_weight",
                         "shape_weight", "node_drop_prob", "embed_drop_prob"})
_STR_KEYS = frozenset({"mode", "data_dir"})


def parse_train_config(text: str) -> TrainConfig:
    """Flat key=value lines; '#' starts a comment; unknown keys rejected."""
    values = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not eq or not key or not val:
            raise ConfigError(f"config line {line_no}: expected key=value")
        try:
            if key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            elif key in _STR_KEYS:
                values[key] = val
            else:
                raise ConfigError(f"config line {line_no}: unknown key "
                                  f"'{key}'")
        except ValueError:
            raise ConfigError(f"config line {line_no}: bad value for "
                              f"'{key}': '{val}'") from None
    schedule = CurriculumSchedule(
        **{k: values.pop(k) for k in _SCHEDULE_KEYS if k in values})
    return TrainConfig(schedule=schedule, **values)


def load_train_config(path) -> TrainConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_train_config(text)


@dataclass
class TrainReport:
    """Loss rows plus the wall clock, which stays out of written artifacts."""

    series: list  # (step, stage, loss) rows
    wall_clock_s: float = 0.0
    metrics: dict = field(default_factory=dict)

    def __post_init__(self):
        for step, stage, loss in self.series:
            if not isinstance(stage, str):
                raise ContractError("series rows are (step, stage, loss)")

    def to_csv(self) -> str:
        lines = ["step,stage,loss"]
        lines += [f"{step},{stage},{loss!r}" for step, stage, loss in self.series]
        return "\n".join(lines) + "\n"

    def summary_json(self) -> str:
        final = {}
        for _, stage, loss in self.series:
            final[stage] = loss
        payload = {"steps": max((s for s, _, _ in self.series), default=0),
                   "final_loss": final, "metrics": self.metrics}
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


# ----------------------------------------------------------- batch plumbing


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _require_ground_truth(stage: str, samples) -> None:
    if stage in ("seg", "img", "joint"):
        for i, s in enumerate(samples):
            if s.patch is None:
                raise DatasetError(f"sample {i} has no conditioning patch; "
                                   f"the {stage} stage needs one")


def _patch_args(sample: Sample):
    if sample.patch is None:
        return None, 0, 0
    x, y, _, _ = sample.patch
    return sample.patch_pixels(), x, y


def _mean(parts, n: int) -> T.Tensor:
    total = parts[0]
    for p in parts[1:]:
        total = T.add(total, p)
    return T.mul(total, 1.0 / n)


def _dropped_view(sample: Sample, prob: float, rng: np.random.Generator):
    """Graph, boxes, and labels with a random node subset removed."""
    if prob <= 0.0:
        return sample.graph, sample.boxes, sample.label_map
    graph, labels = augment_drop_nodes(sample.graph, sample.label_map,
                                       prob, rng)
    keep = {ident for ident, _ in graph.objects}
    boxes = BoxLayout([e for e in sample.boxes.entries
                       if e.instance_id in keep])
    return graph, boxes, labels


# ------------------------------------------------------------- optimizers


def _build_opts(tag: str, pipeline: Pipeline, config: TrainConfig) -> dict:
    lr = config.learning_rate
    if tag == "box":
        return {"box": T.Adam(pipeline.stage1.parameters(), lr)}
    if tag == "seg":
        return {"seg": T.Adam(pipeline.stage2.parameters(), lr)}
    if tag == "img":
        return {"gen": T.Adam(pipeline.stage3.parameters(), lr),
                "disc": T.Adam(pipeline.disc.parameters(), lr)}
    return {"box": T.Adam(pipeline.stage1.parameters(), lr),
            "seg": T.Adam(pipeline.stage2.parameters(), lr),
            "gen": T.Adam(pipeline.stage3.parameters(), lr),
            "disc": T.Adam(pipeline.disc.parameters(), lr)}


def _train_extras(stage: str, epochs_done: int, step: int, rng, opts) -> dict:
    extras = {
        "train.stage": encode_text(stage),
        "train.epoch": np.array(float(epochs_done)),
        "train.step": np.array(float(step)),
        "train.rng": encode_text(json.dumps(rng.bit_generator.state)),
    }
    for tag, opt in opts.items():
        extras[f"opt.{tag}.t"] = np.array(float(opt.step_count))
        for name, m in opt.m.items():
            extras[f"opt.{tag}.m.{name}"] = m
        for name, v in opt.v.items():
            extras[f"opt.{tag}.v.{name}"] = v
    return extras


def _restore_training(stage: str, extras: dict, opts: dict):
    for key in ("train.stage", "train.epoch", "train.step", "train.rng"):
        if key not in extras:
            raise CheckpointError(f"checkpoint has no training state "
                                  f"('{key}' missing)")
    saved = decode_text(extras["train.stage"])
    if saved != stage:
        raise CheckpointError(f"checkpoint trains stage '{saved}', "
                              f"not '{stage}'")
    rng = np.random.default_rng()
    rng.bit_generator.state = json.loads(decode_text(extras["train.rng"]))
    for tag, opt in opts.items():
        t_key = f"opt.{tag}.t"
        if t_key not in extras:
            raise CheckpointError(f"checkpoint has no optimizer state "
                                  f"for '{tag}'")
        opt.step_count = int(extras[t_key])
        for name in list(opt.m):
            m_key, v_key = f"opt.{tag}.m.{name}", f"opt.{tag}.v.{name}"
            if m_key not in extras or v_key not in extras:
                raise CheckpointError(f"optimizer state missing for "
                                      f"parameter '{name}'")
            if extras[m_key].shape != opt.m[name].shape:
                raise CheckpointError(f"optimizer state shape mismatch "
                                      f"for '{name}'")
            opt.m[name] = np.array(extras[m_key])
            opt.v[name] = np.array(extras[v_key])
    return int(extras["train.epoch"]), int(extras["train.step"]), rng


# ------------------------------------------------------------- stage steps


def _box_step(pipeline: Pipeline, batch, config: TrainConfig, opts) -> list:
    losses = []
    for s in batch:
        _, coords = pipeline.stage1.forward(s.graph)
        gt = np.array([e.box for e in s.boxes.entries])
        losses.append(box_l1_loss(coords, gt))
    loss = _mean(losses, len(batch))
    opts["box"].zero_grad()
    T.backward(loss)
    opts["box"].step()
    return [("box", float(loss.item()))]


def _seg_step(pipeline: Pipeline, batch, config: TrainConfig, opts,
              rng) -> list:
    weights = config.class_weights(len(pipeline.vocab))
    losses = []
    for s in batch:
        graph, boxes, labels = _dropped_view(s, config.node_drop_prob, rng)
        vecs, _ = pipeline.stage1.forward(graph)
        feats = vecs.detach()
        if config.embed_drop_prob > 0.0:
            # hide whole node embeddings at random so the decode cannot
            # co-adapt to their content; the category code stays visible
            keep = (rng.random((feats.shape[0], 1))
                    >= config.embed_drop_prob).astype(float)
            feats = T.mul(feats, T.Tensor(keep))
        patch, ox, oy = _patch_args(s)
        logits = pipeline.stage2.forward(boxes, feats,
                                         pipeline.canvas, pipeline.canvas,
                                         patch, ox, oy)
        losses.append(seg_loss(logits, labels, weights))
    loss = _mean(losses, len(batch))
    opts["seg"].zero_grad()
    T.backward(loss)
    opts["seg"].step()
    return [("seg", float(loss.item()))]


def _image_objective(pipeline: Pipeline, batch, reals, fakes, stacked,
                     g_adv, lam: float) -> T.Tensor:
    """Batch image loss: recon + lam*adv (batched) plus mean perceptual.

    The pyramid only takes single images, so the perceptual term averages
    per-sample calls; the summation order still matches the single-image
    composition (recon, adv, perceptual).
    """
    total, _ = total_loss(reals, stacked, g_adv, lam)
    percs = [perceptual_loss(T.tensor(s.image), fake, pipeline.pyramid)
             for s, fake in zip(batch, fakes)]
    return T.add(total, _mean(percs, len(batch)))


def _img_step(pipeline: Pipeline, batch, config: TrainConfig, opts) -> list:
    fakes = []
    for s in batch:
        patch, ox, oy = _patch_args(s)
        fakes.append(pipeline.stage3.forward(s.label_map, patch, ox, oy))
    reals = T.stack([T.tensor(s.image) for s in batch])
    stacked = T.stack(fakes)
    d_loss, g_adv = adversarial_losses(pipeline.disc, reals, stacked)
    opts["disc"].zero_grad()
    T.backward(d_loss)
    opts["disc"].step()
    opts["gen"].zero_grad()
    loss = _image_objective(pipeline, batch, reals, fakes, stacked,
                            g_adv, config.lam)
    T.backward(loss)
    opts["gen"].step()
    return [("img", float(loss.item())), ("disc", float(d_loss.item()))]


def _joint_step(pipeline: Pipeline, batch, config: TrainConfig, opts) -> list:
    weights = config.class_weights(len(pipeline.vocab))
    box_losses, seg_losses, fakes = [], [], []
    for s in batch:
        vecs, coords = pipeline.stage1.forward(s.graph)
        gt = np.array([e.box for e in s.boxes.entries])
        box_losses.append(box_l1_loss(coords, gt))
        # hard boxes across the stage boundary; embeddings stay live
        layout = predict_boxes(pipeline.stage1.head, vecs, s.graph)
        patch, ox, oy = _patch_args(s)
        logits = pipeline.stage2.forward(layout, vecs, pipeline.canvas,
                                         pipeline.canvas, patch, ox, oy)
        seg_losses.append(seg_loss(logits, s.label_map, weights))
        labels_hat = seg_logits_to_labels(logits.numpy())
        fakes.append(pipeline.stage3.forward(labels_hat, patch, ox, oy))
    reals = T.stack([T.tensor(s.image) for s in batch])
    stacked = T.stack(fakes)
    d_loss, g_adv = adversarial_losses(pipeline.disc, reals, stacked)
    opts["disc"].zero_grad()
    T.backward(d_loss)
    opts["disc"].step()

    box_mean = _mean(box_losses, len(batch))
    seg_mean = _mean(seg_losses, len(batch))
    img_total = _image_objective(pipeline, batch, reals, fakes, stacked,
                                 g_adv, config.lam)
    joint = T.add(T.add(box_mean, seg_mean), img_total)
    for tag in ("box", "seg", "gen"):
        opts[tag].zero_grad()
    T.backward(joint)
    for tag in ("box", "seg", "gen"):
        opts[tag].step()
    return [("joint.box", float(box_mean.item())),
            ("joint.seg", float(seg_mean.item())),
            ("joint.img", float(img_total.item())),
            ("joint.total", float(joint.item())),
            ("joint.disc", float(d_loss.item()))]


# ------------------------------------------------------------ entry points


def _run_phase(stage: str, config: TrainConfig, samples, vocab: Vocabulary,
               epochs: int, pipeline, checkpoint_dir, resume_from,
               step_fn) -> tuple[Pipeline, TrainReport]:
    if not samples:
        raise DatasetError("no training samples")
    _require_ground_truth(stage, samples)
    if config.batch_size > len(samples):
        raise ConfigError(f"batch size {config.batch_size} exceeds the "
                          f"{len(samples)}-sample dataset")
    started = time.perf_counter()
    if resume_from is not None:
        pipeline, extras = Pipeline.load_with_extras(resume_from)
        opts = _build_opts(stage, pipeline, config)
        epochs_done, step, rng = _restore_training(stage, extras, opts)
    else:
        if pipeline is None:
            pipeline = config.build_pipeline(vocab)
        opts = _build_opts(stage, pipeline, config)
        epochs_done, step = 0, 0
        rng = np.random.default_rng(config.seed)

    series = []
    while epochs_done < epochs:
        for idx in _batches(len(samples), config.batch_size, rng):
            batch = [samples[i] for i in idx]
            step += 1
            for name, value in step_fn(pipeline, batch, opts, rng):
                series.append((step, name, value))
        epochs_done += 1
        if checkpoint_dir is not None:
            path = f"{checkpoint_dir}/{stage}_epoch_{epochs_done:03d}.lfck"
            pipeline.save(path, _train_extras(stage, epochs_done, step,
                                              rng, opts))
    report = TrainReport(series, time.perf_counter() - started)
    return pipeline, report


def train_stage(stage: str, config: TrainConfig, samples,
                vocab: Vocabulary, pipeline: Pipeline | None = None,
                checkpoint_dir=None, resume_from=None):
    """One separately-trained stage on its ground-truth inputs."""
    if stage not in TRAIN_STAGES:
        raise ContractError(f"unknown stage '{stage}'; "
                            f"choose from {list(TRAIN_STAGES)}")
    epochs = getattr(config.schedule, f"{stage}_epochs")
    step_fns = {
        "box": lambda p, b, o, r: _box_step(p, b, config, o),
        "seg": lambda p, b, o, r: _seg_step(p, b, config, o, r),
        "img": lambda p, b, o, r: _img_step(p, b, config, o),
    }
    return _run_phase(stage, config, samples, vocab, epochs, pipeline,
                      checkpoint_dir, resume_from, step_fns[stage])


def train_joint(config: TrainConfig, samples, vocab: Vocabulary,
                init: Pipeline | None = None, checkpoint_dir=None,
                resume_from=None):
    """Joint fine-tuning; pass the pretrained pipeline for progressive mode."""
    return _run_phase("joint", config, samples, vocab,
                      config.schedule.joint_epochs, init, checkpoint_dir,
                      resume_from,
                      lambda p, b, o, r: _joint_step(p, b, config, o))


def run_curriculum(config: TrainConfig, samples, vocab: Vocabulary,
                   checkpoint_dir=None):
    """The full schedule: per-stage phases then joint, or joint from scratch."""
    started = time.perf_counter()
    series = []
    offset = 0
    pipeline = None
    if config.schedule.mode == "progressive":
        for stage in TRAIN_STAGES:
            pipeline, report = train_stage(stage, config, samples, vocab,
                                           pipeline=pipeline,
                                           checkpoint_dir=checkpoint_dir)
            series += [(step + offset, name, value)
                       for step, name, value in report.series]
            offset = max((s for s, _, _ in series), default=0)
    pipeline, report = train_joint(config, samples, vocab, init=pipeline,
                                   checkpoint_dir=checkpoint_dir)
    series += [(step + offset, name, value)
               for step, name, value in report.series]
    return pipeline, TrainReport(series, time.perf_counter() - started)


# --------------------------------------------------------------- evaluation


def split_samples(samples) -> tuple[list, list]:
    """Deterministic 90/10 split by hashing the sample's dataset id."""
    train, held = [], []
    for i, s in enumerate(samples):
        digest = hashlib.sha256(f"{i:04d}".encode("ascii")).hexdigest()
        (held if int(digest, 16) % 10 == 0 else train).append(s)
    return train, held


def flip_edge_pair(graph: SceneGraph, pair=HORIZONTAL):
    """Graph with the first pair-relation edge (and its mirror) reversed.

    Returns (flipped graph, subject index, object index), or None when the
    graph has no edge with a relation from the pair.
    """
    a, b = (RELATIONS.index(name) for name in pair)
    swap = {a: b, b: a}
    target = next(((s, o) for s, r, o in graph.edges if r in swap), None)
    if target is None:
        return None
    ends = set(target)
    edges = tuple((s, swap[r], o) if r in swap and {s, o} == ends
                  else (s, r, o)
                  for s, r, o in graph.edges)
    return SceneGraph(graph.objects, edges), target[0], target[1]


def _center_order(pipeline: Pipeline, graph: SceneGraph, s: int, o: int,
                  axis: int) -> float:
    layout = pipeline.generate(graph, stages=("box",)).boxes
    delta = (box_center(layout.entries[s].box)[axis]
             - box_center(layout.entries[o].box)[axis])
    return float(np.sign(delta))


def flip_rate(pipeline: Pipeline, graphs, pair=HORIZONTAL) -> float | None:
    """Fraction of graphs whose center ordering reverses with the edge.

    None when no graph carries an edge from the pair.
    """
    axis = 0 if pair == HORIZONTAL else 1
    flipped = usable = 0
    for graph in graphs:
        edit = flip_edge_pair(graph, pair)
        if edit is None:
            continue
        graph2, s, o = edit
        usable += 1
        before = _center_order(pipeline, graph, s, o, axis)
        after = _center_order(pipeline, graph2, s, o, axis)
        if before != 0.0 and after == -before:
            flipped += 1
    return None if usable == 0 else flipped / usable


def _psnr_db(mse: float) -> float:
    if mse <= 10.0 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, -10.0 * np.log10(mse))


def evaluate(pipeline: Pipeline, samples) -> dict:
    """Metric table over a held-out split; every stage scored from its GT."""
    if not samples:
        raise EvaluationError("empty evaluation split")
    vocab = pipeline.vocab
    ious, relations_ok, relations_all = [], 0, 0
    pixels_ok = pixels_all = 0
    class_ok = {name: 0 for name in vocab.categories}
    class_all = {name: 0 for name in vocab.categories}
    psnrs, known_maes, unknown_maes = [], [], []

    for s in samples:
        vecs, _ = pipeline.stage1.forward(s.graph)
        layout = predict_boxes(pipeline.stage1.head, vecs, s.graph)
        for pred, gt in zip(layout.entries, s.boxes.entries):
            ious.append(box_iou(pred.box, gt.box))
        for a, r, b in s.graph.edges:
            relations_all += 1
            derived = derive_relation(layout.entries[a].box,
                                      layout.entries[b].box)
            relations_ok += derived == r

        patch, ox, oy = _patch_args(s)
        logits = pipeline.stage2.forward(s.boxes, vecs.detach(),
                                         pipeline.canvas, pipeline.canvas,
                                         patch, ox, oy)
        pred_labels = seg_logits_to_labels(logits.numpy())
        hit = pred_labels == s.label_map
        pixels_ok += int(hit.sum())
        pixels_all += hit.size
        for k, name in enumerate(vocab.categories):
            mask = s.label_map == k
            class_ok[name] += int(hit[mask].sum())
            class_all[name] += int(mask.sum())

        image = pipeline.stage3.forward(s.label_map, patch, ox, oy).numpy()
        psnrs.append(_psnr_db(float(np.mean((image - s.image) ** 2))))
        if s.patch is not None:
            x, y, h, w = s.patch
            err = np.abs(image - s.image)
            known = err[:, y:y + h, x:x + w]
            unknown_mask = np.ones(err.shape[1:], dtype=bool)
            unknown_mask[y:y + h, x:x + w] = False
            known_maes.append(float(known.mean()))
            if unknown_mask.any():
                unknown_maes.append(float(err[:, unknown_mask].mean()))

    metrics = {
        "n_samples": len(samples),
        "box_iou": float(np.mean(ious)),
        "relation_consistency":
            relations_ok / relations_all if relations_all else 1.0,
        "pixel_accuracy": pixels_ok / pixels_all,
        "class_accuracy": {name: class_ok[name] / class_all[name]
                           for name in vocab.categories
                           if class_all[name] > 0},
        "psnr_db": float(np.mean(psnrs)),
    }
    if known_maes:
        metrics["known_mae"] = float(np.mean(known_maes))
    if unknown_maes:
        metrics["unknown_mae"] = float(np.mean(unknown_maes))
    graphs = [s.graph for s in samples]
    for key, pair in (("flip_horizontal", HORIZONTAL),
                      ("flip_vertical", VERTICAL)):
        rate = flip_rate(pipeline, graphs, pair)
        if rate is not None:
            metrics[key] = rate
    return metrics

"""Synthetic scene generation, box extraction, cropping, and dataset IO."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layoutforge.data import (
    DEFAULT_PALETTE,
    Sample,
    ShapesConfig,
    _random_patch_rect,
    _shape_mask,
    builtin_vocabulary,
    crop_random_patch,
    display_palette,
    extract_gt_boxes,
    generate_shapes_dataset,
    load_dataset,
    load_labeled_directory,
    palette_text,
    save_dataset,
)
from layoutforge.errors import (
    ConfigError,
    ContractError,
    DatasetError,
    GenerationError,
)
from layoutforge.pnm import write_pgm, write_ppm
from layoutforge.scenegraph import Vocabulary

VOCAB = Vocabulary(["background", "circle", "square", "triangle"])

# 0.99 quantile of the chi-square distribution with 9 degrees of freedom
CHI2_CRIT_9DOF = 21.666


def single_square_config(**kw):
    """One zero-jitter square per scene; its box center is round(center)."""
    args = dict(counts=(1, 1), categories=("square",),
                half_sizes={"square": 12}, size_jitter=0, hue_jitter=0.0,
                seed=7)
    args.update(kw)
    return ShapesConfig(**args)


# ------------------------------------------------------------------ config


def test_default_config_builds_and_names_classes():
    cfg = ShapesConfig()
    assert cfg.vocabulary().categories == ["background", "circle", "square",
                                           "triangle"]


def test_config_rejects_bad_canvas():
    with pytest.raises(ConfigError):
        ShapesConfig(canvas=20)
    with pytest.raises(ConfigError):
        ShapesConfig(canvas=8)


def test_config_rejects_bad_count_range():
    with pytest.raises(ConfigError):
        ShapesConfig(counts=(0, 2))
    with pytest.raises(ConfigError):
        ShapesConfig(counts=(3, 2))


def test_config_rejects_unknown_shape():
    with pytest.raises(ConfigError, match="hexagon"):
        ShapesConfig(categories=("hexagon",),
                     half_sizes={"hexagon": 10},
                     palette={"hexagon": (1, 2, 3)})


def test_config_rejects_more_distinct_objects_than_categories():
    with pytest.raises(ConfigError):
        ShapesConfig(counts=(4, 4))


def test_config_rejects_shape_larger_than_canvas():
    with pytest.raises(ConfigError):
        ShapesConfig(half_sizes={"circle": 40, "square": 13, "triangle": 12})


def test_config_rejects_bad_crop_fractions():
    for rng in ((0.0, 0.2), (0.3, 0.2), (0.5, 1.2)):
        with pytest.raises(ConfigError):
            ShapesConfig(crop_fraction=rng)


def test_separation_lookup_falls_back_to_tightest():
    cfg = ShapesConfig()
    assert cfg.separation_for(2) == 30.0
    assert cfg.separation_for(3) == 25.0
    assert cfg.separation_for(1) == 0.0
    assert cfg.separation_for(5) == 25.0


# ------------------------------------------------------------ rasterization


def test_circle_mask_hand_count():
    # r=2 about a pixel corner: the four center pixels plus eight at
    # offsets (1.5, 0.5); the (1.5, 1.5) corners fall at distance sqrt(4.5)
    mask = _shape_mask("circle", 3.0, 3.0, 2.0, 6)
    assert int(mask.sum()) == 12


def test_square_mask_hand_count():
    # half 1.5 about a pixel corner spans pixel centers 1.5..4.5 per axis
    mask = _shape_mask("square", 3.0, 3.0, 1.5, 6)
    assert int(mask.sum()) == 16
    ys, xs = np.nonzero(mask)
    assert xs.min() == 1 and xs.max() == 4 and ys.min() == 1 and ys.max() == 4


def test_triangle_mask_row_widths():
    # apex up: rows widen by one pixel-center per step until the base
    mask = _shape_mask("triangle", 3.5, 3.5, 2.0, 7)
    assert mask.sum(axis=1).tolist() == [0, 1, 1, 3, 3, 5, 0]


def test_unknown_mask_kind_rejected():
    with pytest.raises(ConfigError):
        _shape_mask("blob", 3.0, 3.0, 2.0, 8)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["circle", "square", "triangle"]),
       st.floats(8.0, 56.0), st.floats(8.0, 56.0), st.floats(2.0, 7.0))
def test_masks_stay_inside_their_half_box(kind, cx, cy, half):
    mask = _shape_mask(kind, cx, cy, half, 64)
    ys, xs = np.nonzero(mask)
    assert ys.size > 0
    assert xs.min() + 0.5 >= cx - half and xs.max() + 0.5 <= cx + half
    assert ys.min() + 0.5 >= cy - half and ys.max() + 0.5 <= cy + half


# ------------------------------------------------------------- gt boxes


def test_extract_single_pixel_box():
    lm = np.zeros((10, 10), dtype=int)
    lm[5, 3] = 2
    layout = extract_gt_boxes(lm, VOCAB)
    assert len(layout) == 1
    entry = layout.entries[0]
    assert entry.instance_id == "square" and entry.category == 2
    assert entry.box == (0.3, 0.5, 0.4, 0.6)


def test_extract_full_canvas_box():
    lm = np.ones((6, 8), dtype=int)
    layout = extract_gt_boxes(lm, VOCAB)
    assert layout.entries[0].box == (0.0, 0.0, 1.0, 1.0)


def test_extract_empty_map_gives_empty_layout():
    assert len(extract_gt_boxes(np.zeros((4, 4), dtype=int), VOCAB)) == 0


def test_extract_spans_disconnected_pixels_of_a_class():
    lm = np.zeros((8, 10), dtype=int)
    lm[0, 0] = 1
    lm[7, 9] = 1
    layout = extract_gt_boxes(lm, VOCAB)
    assert layout.entries[0].box == (0.0, 0.0, 1.0, 1.0)


def test_extract_rejects_bad_inputs():
    with pytest.raises(ContractError):
        extract_gt_boxes(np.zeros((2, 2, 2), dtype=int), VOCAB)
    with pytest.raises(ContractError):
        extract_gt_boxes(np.full((4, 4), 9), VOCAB)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_extracted_boxes_cover_their_pixels(seed):
    lm = np.random.default_rng(seed).integers(0, 4, size=(12, 17))
    for entry in extract_gt_boxes(lm, VOCAB).entries:
        x0, y0, x1, y1 = entry.box
        ys, xs = np.nonzero(lm == entry.category)
        assert x0 <= xs.min() / 17 and xs.max() / 17 < x1
        assert y0 <= ys.min() / 12 and ys.max() / 12 < y1


# ------------------------------------------------------------- generation


def test_generation_is_deterministic():
    a = generate_shapes_dataset(ShapesConfig(seed=3), 6)
    b = generate_shapes_dataset(ShapesConfig(seed=3), 6)
    for s, t in zip(a, b):
        assert np.array_equal(s.image, t.image)
        assert np.array_equal(s.label_map, t.label_map)
        assert s.patch == t.patch
        assert [e.box for e in s.boxes.entries] == [e.box for e in t.boxes.entries]
        assert s.graph.edges == t.graph.edges


def test_generated_scenes_respect_the_config():
    cfg = ShapesConfig(seed=5)
    for s in generate_shapes_dataset(cfg, 30):
        present = np.unique(s.label_map)
        assert present.min() >= 0 and present.max() <= 3
        n_objects = len(s.boxes)
        assert 2 <= n_objects <= 3
        cats = [e.category for e in s.boxes.entries]
        assert len(set(cats)) == n_objects  # distinct categories
        x, y, h, w = s.patch
        assert x >= 0 and y >= 0 and x + w <= 64 and y + h <= 64
        assert 0.15 * 4096 <= h * w <= 0.25 * 4096


def test_background_pixels_are_white_and_colors_sit_on_the_pnm_grid():
    for s in generate_shapes_dataset(ShapesConfig(seed=2), 4):
        bg = s.image[:, s.label_map == 0]
        assert np.all(bg == 1.0)
        assert np.array_equal(s.image * 255, np.round(s.image * 255))


def test_stored_boxes_match_label_map_exactly():
    for s in generate_shapes_dataset(ShapesConfig(seed=9), 20):
        again = extract_gt_boxes(s.label_map, VOCAB)
        assert [(e.instance_id, e.category, e.box) for e in again.entries] \
            == [(e.instance_id, e.category, e.box) for e in s.boxes.entries]


def test_graph_nodes_mirror_the_layout():
    for s in generate_shapes_dataset(ShapesConfig(seed=1), 8):
        assert [i for i, _ in s.graph.objects] \
            == [e.instance_id for e in s.boxes.entries]
        n = len(s.boxes)
        assert len(s.graph.edges) == n * (n - 1)  # all pairs, both ways


def test_unsatisfiable_separation_raises():
    cfg = ShapesConfig(min_separation={2: 1000.0, 3: 1000.0})
    with pytest.raises(GenerationError):
        generate_shapes_dataset(cfg, 1)


def test_empty_request_rejected():
    with pytest.raises(ContractError):
        generate_shapes_dataset(ShapesConfig(), 0)


def test_object_centers_are_uniform():
    """Chi-square against the exact discrete null.

    A zero-jitter square's box center is round(center) of the placed
    square, so with centers uniform on [12, 52] the lattice masses are
    0.5/40 at 12 and 52 and 1/40 at 13..51. Ten bins split at 16, 20,
    ..., 48 carry expected mass 3.5/40, eight times 4/40, then 4.5/40.
    """
    samples = generate_shapes_dataset(single_square_config(), 10000)
    edges = 12 + 4 * np.arange(1, 10)
    expected = 10000 * np.array([3.5] + [4.0] * 8 + [4.5]) / 40.0
    for axis in (0, 1):
        centers = np.array(
            [(s.boxes.entries[0].box[axis] + s.boxes.entries[0].box[axis + 2])
             / 2 * 64 for s in samples])
        assert np.array_equal(centers, np.round(centers))
        counts = np.bincount(np.digitize(centers, edges), minlength=10)
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert chi2 < CHI2_CRIT_9DOF


# ---------------------------------------------------------------- cropping


def test_patch_fractions_stay_in_range():
    rng = np.random.default_rng(11)
    fracs = []
    for _ in range(10000):
        x, y, h, w = _random_patch_rect(64, 64, (0.15, 0.25), rng)
        assert x >= 0 and y >= 0 and x + w <= 64 and y + h <= 64
        fracs.append(h * w / 4096.0)
    fracs = np.array(fracs)
    assert fracs.min() >= 0.15 and fracs.max() <= 0.25
    assert abs(fracs.mean() - 0.20) < 0.005


def test_fraction_one_returns_the_full_canvas():
    rng = np.random.default_rng(3)
    assert _random_patch_rect(64, 64, (1.0, 1.0), rng) == (0, 0, 64, 64)


def test_patch_aspect_is_bounded():
    rng = np.random.default_rng(4)
    for _ in range(2000):
        _, _, h, w = _random_patch_rect(64, 64, (0.15, 0.25), rng)
        # drawn in [3/4, 4/3]; rounding to whole pixels widens it a touch
        assert 0.7 <= w / h <= 1.43


def test_tiny_patches_are_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError, match="4x4"):
        _random_patch_rect(64, 64, (0.001, 0.002), rng)


def test_bad_fraction_ranges_are_rejected():
    rng = np.random.default_rng(0)
    for bad in ((0.0, 0.2), (0.3, 0.2), (0.2, 1.5)):
        with pytest.raises(ConfigError):
            _random_patch_rect(64, 64, bad, rng)


def test_crop_random_patch_reads_the_sample_size():
    sample = generate_shapes_dataset(ShapesConfig(seed=6), 1)[0]
    x, y, h, w = crop_random_patch(sample, rng=np.random.default_rng(8))
    assert sample.patch_pixels().shape[0] == 3
    assert sample.image[:, y:y + h, x:x + w].shape == (3, h, w)
    assert 0.15 * 4096 <= h * w <= 0.25 * 4096


@pytest.mark.parametrize("h,w", [(16, 16), (37, 53), (64, 96)])
def test_patch_rect_on_odd_canvases(h, w):
    rng = np.random.default_rng(13)
    for _ in range(300):
        x, y, ph, pw = _random_patch_rect(h, w, (0.2, 0.4), rng)
        assert 0 <= x and 0 <= y and x + pw <= w and y + ph <= h
        assert 0.2 * h * w <= ph * pw <= 0.4 * h * w


# ------------------------------------------------------------ disk formats


def test_save_load_round_trip(tmp_path):
    samples = generate_shapes_dataset(ShapesConfig(seed=4), 20)
    save_dataset(samples, tmp_path, VOCAB)
    loaded, vocab = load_dataset(tmp_path)
    assert vocab.categories == VOCAB.categories
    assert len(loaded) == 20
    for a, b in zip(loaded, samples):
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.label_map, b.label_map)
        assert a.patch == b.patch
        assert [(e.instance_id, e.category, e.box) for e in a.boxes.entries] \
            == [(e.instance_id, e.category, e.box) for e in b.boxes.entries]
        assert a.graph.edges == b.graph.edges


def test_two_generations_write_identical_bytes(tmp_path):
    for name in ("a", "b"):
        save_dataset(generate_shapes_dataset(ShapesConfig(seed=12), 5),
                     tmp_path / name, VOCAB)
    for rel in ("manifest.jsonl", "images/0003.ppm", "labels/0003.pgm",
                "graphs/0003.sg", "vocab.txt"):
        assert (tmp_path / "a" / rel).read_bytes() \
            == (tmp_path / "b" / rel).read_bytes()


def test_missing_file_is_named(tmp_path):
    save_dataset(generate_shapes_dataset(ShapesConfig(seed=0), 3),
                 tmp_path, VOCAB)
    (tmp_path / "images" / "0001.ppm").unlink()
    with pytest.raises(DatasetError, match="images/0001.ppm"):
        load_dataset(tmp_path)


def test_corrupt_manifest_line_is_positioned(tmp_path):
    save_dataset(generate_shapes_dataset(ShapesConfig(seed=0), 2),
                 tmp_path, VOCAB)
    manifest = tmp_path / "manifest.jsonl"
    lines = manifest.read_text().splitlines()
    lines[1] = "{not json"
    manifest.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(tmp_path)


def test_patch_outside_canvas_is_rejected(tmp_path):
    save_dataset(generate_shapes_dataset(ShapesConfig(seed=0), 1),
                 tmp_path, VOCAB)
    manifest = tmp_path / "manifest.jsonl"
    row = json.loads(manifest.read_text())
    row["patch"] = {"x": 60, "y": 0, "h": 8, "w": 8}
    manifest.write_text(json.dumps(row) + "\n")
    with pytest.raises(DatasetError, match="patch"):
        load_dataset(tmp_path)


def test_missing_manifest_and_vocab_are_reported(tmp_path):
    with pytest.raises(DatasetError, match="manifest.jsonl"):
        load_dataset(tmp_path)
    (tmp_path / "manifest.jsonl").write_text("")
    with pytest.raises(DatasetError, match="vocab"):
        load_dataset(tmp_path)


# -------------------------------------------------------- labeled ingest


def write_labeled_pair(root, stem, sample):
    (root / "images").mkdir(exist_ok=True)
    (root / "labels").mkdir(exist_ok=True)
    write_ppm(root / "images" / f"{stem}.ppm", sample.image)
    write_pgm(root / "labels" / f"{stem}.pgm", sample.label_map)


def test_labeled_directory_derives_boxes_and_graphs(tmp_path):
    samples = generate_shapes_dataset(ShapesConfig(seed=8), 3)
    for i, s in enumerate(samples):
        write_labeled_pair(tmp_path, f"img_{i}", s)
    (tmp_path / "vocab.txt").write_text(VOCAB.to_text())
    loaded, vocab = load_labeled_directory(tmp_path)
    assert vocab.categories == VOCAB.categories
    assert len(loaded) == 3
    for a, b in zip(loaded, samples):  # stems sort in write order here
        assert np.array_equal(a.label_map, b.label_map)
        assert a.patch is None
        assert [e.box for e in a.boxes.entries] == [e.box for e in b.boxes.entries]
        assert len(a.graph.objects) == len(b.boxes)


def test_labeled_directory_missing_label_is_named(tmp_path):
    s = generate_shapes_dataset(ShapesConfig(seed=8), 1)[0]
    write_labeled_pair(tmp_path, "img_0", s)
    (tmp_path / "labels" / "img_0.pgm").unlink()
    with pytest.raises(DatasetError, match="img_0.pgm"):
        load_labeled_directory(tmp_path, VOCAB)


def test_labeled_directory_rejects_size_mismatch(tmp_path):
    s = generate_shapes_dataset(ShapesConfig(seed=8), 1)[0]
    write_labeled_pair(tmp_path, "img_0", s)
    write_pgm(tmp_path / "labels" / "img_0.pgm", s.label_map[:32, :])
    with pytest.raises(DatasetError, match="img_0"):
        load_labeled_directory(tmp_path, VOCAB)


def test_labeled_directory_rejects_all_background(tmp_path):
    s = generate_shapes_dataset(ShapesConfig(seed=8), 1)[0]
    write_labeled_pair(tmp_path, "img_0", s)
    write_pgm(tmp_path / "labels" / "img_0.pgm",
              np.zeros_like(s.label_map))
    with pytest.raises(DatasetError, match="background"):
        load_labeled_directory(tmp_path, VOCAB)


def test_labeled_directory_requires_images(tmp_path):
    with pytest.raises(DatasetError):
        load_labeled_directory(tmp_path, VOCAB)


# ------------------------------------------------------------ vocabularies


def test_builtin_vocabularies():
    helen = builtin_vocabulary("helen")
    ccp = builtin_vocabulary("ccp")
    shapes = builtin_vocabulary("shapes")
    assert len(helen) == 11 and len(ccp) == 10 and len(shapes) == 4
    for v in (helen, ccp, shapes):
        assert v.categories[0] == "background"
    assert "nose" in helen.categories and "dress" in ccp.categories


def test_unknown_builtin_vocabulary_lists_choices():
    with pytest.raises(ConfigError, match="helen"):
        builtin_vocabulary("nope")


def test_display_palette_covers_every_class():
    colors = display_palette(VOCAB, DEFAULT_PALETTE)
    assert len(colors) == 4
    assert colors[0] == (255, 255, 255)
    assert colors[1] == DEFAULT_PALETTE["circle"]
    text = palette_text(VOCAB, DEFAULT_PALETTE)
    assert text.splitlines()[2] == "2 square 60 180 75"
    for r, g, b in colors:
        assert 0 <= min(r, g, b) and max(r, g, b) <= 255

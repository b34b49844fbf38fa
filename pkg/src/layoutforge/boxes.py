"""Normalized bounding boxes and the per-object box layout.

A box is (x0, y0, x1, y1) with 0 <= x0 <= x1 <= 1 and 0 <= y0 <= y1 <= 1,
x measured along width, y along height, y growing downward. A layout pairs
each object instance with its category and box.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ContractError, ShapeError

Box = tuple[float, float, float, float]


def validate_box(box) -> Box:
    if len(box) != 4:
        raise ShapeError(f"box needs 4 coordinates, got {len(box)}")
    x0, y0, x1, y1 = (float(v) for v in box)
    if not (0.0 <= x0 <= x1 <= 1.0 and 0.0 <= y0 <= y1 <= 1.0):
        raise ContractError(f"box ({x0}, {y0}, {x1}, {y1}) violates "
                            "0<=min<=max<=1 ordering")
    return (x0, y0, x1, y1)


def box_center(box: Box) -> tuple[float, float]:
    x0, y0, x1, y1 = box
    return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


def box_area(box: Box) -> float:
    x0, y0, x1, y1 = box
    return (x1 - x0) * (y1 - y0)


def box_iou(a: Box, b: Box) -> float:
    """Intersection area over union area; 0 when the union is empty."""
    a, b = validate_box(a), validate_box(b)
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = box_area(a) + box_area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class BoxEntry:
    instance_id: str
    category: int  # index into the vocabulary's category list
    box: Box


class BoxLayout:
    """An ordered set of object boxes, one entry per scene object."""

    def __init__(self, entries):
        checked = []
        seen = set()
        for e in entries:
            if not isinstance(e, BoxEntry):
                e = BoxEntry(str(e[0]), int(e[1]), tuple(e[2]))
            if e.instance_id in seen:
                raise ContractError(f"duplicate instance id '{e.instance_id}' "
                                    "in box layout")
            seen.add(e.instance_id)
            checked.append(BoxEntry(e.instance_id, e.category,
                                    validate_box(e.box)))
        self.entries: list[BoxEntry] = checked

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i) -> BoxEntry:
        return self.entries[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, BoxLayout) and self.entries == other.entries

    def __repr__(self) -> str:
        return f"BoxLayout({len(self.entries)} entries)"

    def boxes(self) -> list[Box]:
        return [e.box for e in self.entries]


def mean_box_l1(pred: BoxLayout, truth: BoxLayout) -> float:
    """Average over objects of the 4-coordinate absolute difference sum."""
    if len(pred) != len(truth):
        raise ContractError(f"layout size mismatch: {len(pred)} vs {len(truth)}")
    if len(pred) == 0:
        raise ContractError("box distance over an empty layout")
    for p, t in zip(pred, truth):
        if p.instance_id != t.instance_id:
            raise ContractError(f"layout object mismatch: '{p.instance_id}' "
                                f"vs '{t.instance_id}'")
    total = 0.0
    for p, t in zip(pred, truth):
        total += sum(abs(pc - tc) for pc, tc in zip(p.box, t.box))
    return total / len(pred)


def mean_layout_iou(pred: BoxLayout, truth: BoxLayout) -> float:
    if len(pred) != len(truth) or len(pred) == 0:
        raise ContractError(f"layout size mismatch: {len(pred)} vs {len(truth)}")
    return sum(box_iou(p.box, t.box) for p, t in zip(pred, truth)) / len(pred)


def layout_to_json(layout: BoxLayout, category_names) -> str:
    """JSON array of {id, category, x0, y0, x1, y1}, full float precision."""
    rows = []
    for e in layout:
        if not 0 <= e.category < len(category_names):
            raise ContractError(f"category index {e.category} outside "
                                f"vocabulary of {len(category_names)}")
        x0, y0, x1, y1 = e.box
        rows.append({"id": e.instance_id,
                     "category": category_names[e.category],
                     "x0": x0, "y0": y0, "x1": x1, "y1": y1})
    return json.dumps(rows, indent=2) + "\n"


def layout_from_json(text: str, category_names) -> BoxLayout:
    try:
        rows = json.loads(text)
    except json.JSONDecodeError as e:
        raise ContractError(f"box layout JSON malformed: {e}") from e
    if not isinstance(rows, list):
        raise ContractError("box layout JSON must be an array")
    index = {name: i for i, name in enumerate(category_names)}
    entries = []
    for row in rows:
        try:
            cat = index[row["category"]]
            entries.append(BoxEntry(str(row["id"]), cat,
                                    (row["x0"], row["y0"], row["x1"], row["y1"])))
        except KeyError as e:
            raise ContractError(f"box layout JSON missing field or unknown "
                                f"category: {e}") from e
    return BoxLayout(entries)

"""Scene graphs: the text DSL, relation semantics, and graph augmentation.

The DSL is statement-per-semicolon:

    # comment to end of line
    a : circle;
    b : square;
    a left_of b;

Declarations (`id : category`) must precede the edges that use them.
Identifiers are [A-Za-z_][A-Za-z0-9_]*. Whitespace is free-form.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boxes import Box, BoxLayout, box_center, validate_box
from .errors import ContractError, DatasetError, DegenerateInputError, LayoutForgeError

RELATIONS = ("left_of", "right_of", "above", "below", "inside", "surrounding")

LEFT_OF, RIGHT_OF, ABOVE, BELOW, INSIDE, SURROUNDING = range(6)

# antisymmetric partner of each relation index
INVERSE_RELATION = (RIGHT_OF, LEFT_OF, BELOW, ABOVE, SURROUNDING, INSIDE)

_CATEGORY_RE = re.compile(r"[a-z_]+\Z")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class GraphParseError(LayoutForgeError):
    """A positioned DSL rejection; ``kind`` names the rule violated."""

    def __init__(self, kind: str, line: int, column: int, message: str):
        super().__init__(f"{kind} at line {line}, column {column}: {message}")
        self.kind = kind
        self.line = line
        self.column = column


class Vocabulary:
    """Object categories (index 0 is the background) plus the fixed relations."""

    def __init__(self, categories):
        cats = list(categories)
        if not cats:
            raise ContractError("vocabulary needs at least the background category")
        seen = set()
        for name in cats:
            if not _CATEGORY_RE.match(name):
                raise ContractError(f"category '{name}' must match [a-z_]+")
            if name in seen:
                raise ContractError(f"duplicate category '{name}'")
            seen.add(name)
        self.categories: list[str] = cats
        self.relations: tuple[str, ...] = RELATIONS

    def __len__(self) -> int:
        return len(self.categories)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.categories == other.categories

    def category_index(self, name: str) -> int:
        try:
            return self.categories.index(name)
        except ValueError:
            raise KeyError(name) from None

    def to_text(self) -> str:
        return "\n".join(self.categories) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        cats = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                cats.append(line)
        return cls(cats)

    @classmethod
    def from_file(cls, path) -> "Vocabulary":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise DatasetError(f"cannot read vocabulary {path}: {e}") from e
        try:
            return cls.from_text(text)
        except ContractError as e:
            raise DatasetError(f"vocabulary {path}: {e}") from e


@dataclass(frozen=True)
class SceneGraph:
    """Object instances plus directed relation edges between them.

    ``objects`` holds (instance_id, category index) pairs; ``edges`` holds
    (subject index, relation index, object index) triples into ``objects``.
    """

    objects: tuple
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "objects",
                           tuple((str(i), int(c)) for i, c in self.objects))
        object.__setattr__(self, "edges",
                           tuple((int(s), int(r), int(o)) for s, r, o in self.edges))
        ids = [i for i, _ in self.objects]
        if len(set(ids)) != len(ids):
            raise ContractError("instance ids must be unique")
        n = len(self.objects)
        pairs = set()
        for s, r, o in self.edges:
            if not (0 <= s < n and 0 <= o < n):
                raise ContractError(f"edge ({s},{r},{o}) references a missing object")
            if not 0 <= r < len(RELATIONS):
                raise ContractError(f"edge relation index {r} out of range")
            if s == o:
                raise ContractError(f"self-edge on object index {s}")
            if (s, o) in pairs:
                raise ContractError(f"duplicate edge for object pair ({s},{o})")
            pairs.add((s, o))

    @property
    def instance_ids(self):
        return [i for i, _ in self.objects]

    def category_of(self, index: int) -> int:
        return self.objects[index][1]


_TOKEN = re.compile(r"[#;:]|[^\s#;:]+")


def _tokenize(text: str):
    """Yield (token, line, column), columns 1-based, comments stripped."""
    for lineno, line in enumerate(text.split("\n"), start=1):
        for m in _TOKEN.finditer(line):
            if m.group() == "#":
                break
            yield m.group(), lineno, m.start() + 1


def parse_scene_graph(text: str, vocab: Vocabulary) -> SceneGraph:
    """Parse the DSL; every rejection is a GraphParseError with position."""
    tokens = list(_tokenize(text))
    statements: list[list[tuple[str, int, int]]] = []
    current: list[tuple[str, int, int]] = []
    for tok, line, col in tokens:
        if tok == ";":
            if not current:
                raise GraphParseError("SyntaxError", line, col, "empty statement")
            statements.append(current)
            current = []
        else:
            current.append((tok, line, col))
    if current:
        tok, line, col = current[-1]
        raise GraphParseError("SyntaxError", line, col + len(tok) - 1,
                              "statement missing terminating ';'")

    objects: list[tuple[str, int]] = []
    index_of: dict[str, int] = {}
    edges: list[tuple[int, int, int]] = []
    edge_pairs: set[tuple[int, int]] = set()
    for stmt in statements:
        words = [w for w, _, _ in stmt]
        if len(stmt) == 3 and words[1] == ":":
            ident, line, col = stmt[0]
            cat, cline, ccol = stmt[2]
            if not _IDENT_RE.match(ident):
                raise GraphParseError("SyntaxError", line, col,
                                      f"'{ident}' is not a valid identifier")
            if cat == ":":
                raise GraphParseError("SyntaxError", cline, ccol,
                                      "expected a category name")
            if ident in index_of:
                raise GraphParseError("DuplicateDeclaration", line, col,
                                      f"'{ident}' is already declared")
            try:
                cat_idx = vocab.category_index(cat)
            except KeyError:
                raise GraphParseError("UnknownCategory", cline, ccol,
                                      f"'{cat}' is not in the vocabulary") from None
            index_of[ident] = len(objects)
            objects.append((ident, cat_idx))
        elif len(stmt) == 3 and ":" not in words:
            (subj, sline, scol), (rel, rline, rcol), (obj, oline, ocol) = stmt
            if rel not in RELATIONS:
                raise GraphParseError("UnknownRelation", rline, rcol,
                                      f"'{rel}' is not a relation")
            for ident, iline, icol in ((subj, sline, scol), (obj, oline, ocol)):
                if ident not in index_of:
                    raise GraphParseError("UndeclaredObject", iline, icol,
                                          f"'{ident}' is used before declaration")
            s, o = index_of[subj], index_of[obj]
            if s == o:
                raise GraphParseError("SelfEdge", sline, scol,
                                      f"'{subj}' cannot relate to itself")
            if (s, o) in edge_pairs:
                raise GraphParseError("DuplicateEdge", sline, scol,
                                      f"pair ('{subj}', '{obj}') already has an edge")
            edge_pairs.add((s, o))
            edges.append((s, RELATIONS.index(rel), o))
        else:
            tok, line, col = stmt[0]
            raise GraphParseError(
                "SyntaxError", line, col,
                "expected 'id : category' or 'id relation id'")
    return SceneGraph(tuple(objects), tuple(edges))


def serialize_scene_graph(g: SceneGraph, vocab: Vocabulary) -> str:
    """Canonical DSL: declarations in object order, then edges in edge order."""
    lines = []
    for ident, cat in g.objects:
        lines.append(f"{ident} : {vocab.categories[cat]};")
    for s, r, o in g.edges:
        lines.append(f"{g.objects[s][0]} {RELATIONS[r]} {g.objects[o][0]};")
    return "\n".join(lines) + ("\n" if lines else "")


def derive_relation(box_a: Box, box_b: Box) -> int:
    """The relation of a toward b: containment first, then dominant axis.

    Strict containment wins; otherwise the larger center displacement axis
    decides, with ties (including identical boxes) breaking to left_of.
    """
    ax0, ay0, ax1, ay1 = validate_box(box_a)
    bx0, by0, bx1, by1 = validate_box(box_b)
    if ax0 > bx0 and ay0 > by0 and ax1 < bx1 and ay1 < by1:
        return INSIDE
    if bx0 > ax0 and by0 > ay0 and bx1 < ax1 and by1 < ay1:
        return SURROUNDING
    (acx, acy), (bcx, bcy) = box_center(box_a), box_center(box_b)
    dx, dy = bcx - acx, bcy - acy
    if abs(dx) >= abs(dy):
        return LEFT_OF if dx > 0 else (RIGHT_OF if dx < 0 else LEFT_OF)
    return ABOVE if dy > 0 else BELOW


def derive_scene_graph_from_layout(layout: BoxLayout, vocab: Vocabulary,
                                   edge_policy: str = "nearest") -> SceneGraph:
    """Build a graph over layout objects with relations from their boxes.

    Policies: "nearest" adds one edge per object toward its nearest-center
    neighbor (ties to the lowest index); "all_pairs" adds every ordered pair;
    "chain" links consecutive entries.
    """
    n = len(layout)
    if n == 0:
        raise DegenerateInputError("cannot derive a graph from an empty layout")
    for e in layout:
        if not 0 <= e.category < len(vocab):
            raise ContractError(f"category index {e.category} outside vocabulary")
    if edge_policy not in ("nearest", "all_pairs", "chain"):
        raise ContractError(f"unknown edge policy '{edge_policy}'")
    objects = tuple((e.instance_id, e.category) for e in layout)
    pairs: list[tuple[int, int]] = []
    if n == 1:
        pass
    elif edge_policy == "nearest":
        centers = [box_center(e.box) for e in layout]
        for i in range(n):
            best, best_d = -1, math.inf
            for j in range(n):
                if j == i:
                    continue
                d = ((centers[i][0] - centers[j][0]) ** 2
                     + (centers[i][1] - centers[j][1]) ** 2)
                if d < best_d:
                    best, best_d = j, d
            pairs.append((i, best))
    elif edge_policy == "all_pairs":
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    elif edge_policy == "chain":
        pairs = [(i, i + 1) for i in range(n - 1)]
    edges = tuple((i, derive_relation(layout[i].box, layout[j].box), j)
                  for i, j in pairs)
    return SceneGraph(objects, edges)


def augment_drop_nodes(g: SceneGraph, label_map: np.ndarray, drop_prob: float,
                       rng: np.random.Generator):
    """Randomly remove non-background nodes and erase orphaned label pixels.

    Each non-background node drops independently with ``drop_prob``; if the
    draw removes everything, it is redrawn. A category's pixels are cleared
    only when no node of that category survives, so duplicate-instance scenes
    stay consistent. Returns (new graph, new label map).
    """
    if not 0.0 <= drop_prob < 1.0:
        raise ContractError(f"drop_prob must be in [0, 1), got {drop_prob}")
    label_map = np.asarray(label_map)
    node_cats = {cat for _, cat in g.objects}
    map_cats = set(int(v) for v in np.unique(label_map)) - {0}
    orphans = map_cats - node_cats
    if orphans:
        raise ContractError(f"label map contains classes {sorted(orphans)} "
                            "with no graph node")
    if drop_prob == 0.0 or not g.objects:
        return g, label_map.copy()

    droppable = [i for i, (_, cat) in enumerate(g.objects) if cat != 0]
    keep = [True] * len(g.objects)
    if droppable:
        while True:
            drops = rng.uniform(size=len(droppable)) < drop_prob
            if not all(drops) or len(droppable) < len(g.objects):
                break
        for i, dropped in zip(droppable, drops):
            keep[i] = not dropped

    remap = {}
    objects = []
    for i, obj in enumerate(g.objects):
        if keep[i]:
            remap[i] = len(objects)
            objects.append(obj)
    edges = tuple((remap[s], r, remap[o]) for s, r, o in g.edges
                  if keep[s] and keep[o])
    g2 = SceneGraph(tuple(objects), edges)

    surviving_cats = {cat for _, cat in objects}
    out = label_map.copy()
    for cat in map_cats - surviving_cats:
        out[out == cat] = 0
    return g2, out

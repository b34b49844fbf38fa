"""Stage I: graph message passing and per-object box regression.

A scene graph enters as category/relation embeddings; a stack of edge-wise
message-passing layers mixes them; a small head maps each node vector to a
normalized box. All summations run in a fixed order (self first, then edges
in list order), so node renumbering permutes outputs bit for bit.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .boxes import BoxEntry, BoxLayout
from .errors import ConfigError, ContractError
from .nn import Block, Linear
from .scenegraph import RELATIONS, SceneGraph


class EmbeddingTable(Block):
    """Learned vectors per object category and per relation."""

    def __init__(self, name: str, n_categories: int, dim: int,
                 rng: np.random.Generator):
        super().__init__()
        if n_categories < 1 or dim < 1:
            raise ConfigError(f"embedding table needs positive sizes, got "
                              f"{n_categories} categories, dim {dim}")
        self.dim = dim
        self.n_categories = n_categories
        self.objects = T.Parameter(f"{name}.obj",
                                   rng.standard_normal((n_categories, dim)))
        self.relations = T.Parameter(f"{name}.rel",
                                     rng.standard_normal((len(RELATIONS), dim)))
        self._params = [self.objects, self.relations]


class GcnLayer(Block):
    """One round of edge-message computation and node pooling.

    The edge net maps concat(v_subject, v_edge, v_object) to three segments:
    a candidate for the subject, the edge's next vector, and a candidate for
    the object. Each node averages its candidates together with its own
    previous vector, then passes through the node net.
    """

    def __init__(self, name: str, dim: int, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.edge1 = Linear(f"{name}.edge1", 3 * dim, 3 * dim, rng)
        self.edge2 = Linear(f"{name}.edge2", 3 * dim, 3 * dim, rng, gain="linear")
        self.node1 = Linear(f"{name}.node1", dim, dim, rng)
        self.node2 = Linear(f"{name}.node2", dim, dim, rng, gain="linear")
        self._children = [self.edge1, self.edge2, self.node1, self.node2]

    def __call__(self, nodes: T.Tensor, edge_vecs: T.Tensor,
                 subj: np.ndarray, obj: np.ndarray):
        n, d = nodes.shape
        if edge_vecs.shape[0] == 0:
            pooled = nodes  # self-candidate only, count 1
            new_edges = edge_vecs
        else:
            s = T.gather_rows(nodes, subj)
            o = T.gather_rows(nodes, obj)
            msg = self.edge2(T.relu(self.edge1(T.concat([s, edge_vecs, o], axis=1))))
            cand_s = T.narrow(msg, 1, 0, d)
            new_edges = T.narrow(msg, 1, d, d)
            cand_o = T.narrow(msg, 1, 2 * d, d)
            counts = np.ones((n, 1))
            np.add.at(counts[:, 0], subj, 1.0)
            np.add.at(counts[:, 0], obj, 1.0)
            total = T.add(T.add(nodes, T.scatter_add_rows(cand_s, subj, n)),
                          T.scatter_add_rows(cand_o, obj, n))
            pooled = T.div(total, T.Tensor(counts))
        return self.node2(T.relu(self.node1(pooled))), new_edges


class GcnStack(Block):
    def __init__(self, name: str, dim: int, depth: int, rng: np.random.Generator):
        super().__init__()
        if depth < 1:
            raise ConfigError(f"message-passing depth must be >= 1, got {depth}")
        self.dim = dim
        self.layers = [GcnLayer(f"{name}.l{i}", dim, rng) for i in range(depth)]
        self._children = list(self.layers)


class BoxHead(Block):
    """Three linear layers squeezing a node vector into a sigmoid box."""

    def __init__(self, name: str, dim: int, rng: np.random.Generator):
        super().__init__()
        if dim < 2:
            raise ConfigError(f"box head needs dim >= 2, got {dim}")
        self.in_dim = dim
        self.fc1 = Linear(f"{name}.fc1", dim, dim, rng)
        self.fc2 = Linear(f"{name}.fc2", dim, dim // 2, rng)
        self.fc3 = Linear(f"{name}.fc3", dim // 2, 4, rng, gain="linear")
        self._children = [self.fc1, self.fc2, self.fc3]

    def __call__(self, vecs: T.Tensor) -> T.Tensor:
        raw = T.sigmoid(self.fc3(T.relu(self.fc2(T.relu(self.fc1(vecs))))))
        cx0 = T.narrow(raw, 1, 0, 1)
        cy0 = T.narrow(raw, 1, 1, 1)
        cx1 = T.narrow(raw, 1, 2, 1)
        cy1 = T.narrow(raw, 1, 3, 1)
        return T.concat([T.minimum(cx0, cx1), T.minimum(cy0, cy1),
                         T.maximum(cx0, cx1), T.maximum(cy0, cy1)], axis=1)


def gcn_forward(g: SceneGraph, table: EmbeddingTable, stack: GcnStack) -> T.Tensor:
    """Relationally mixed per-node vectors, shape (N, dim)."""
    if table.dim != stack.dim:
        raise ConfigError(f"embedding dim {table.dim} does not match "
                          f"message-passing dim {stack.dim}")
    cats = np.array([c for _, c in g.objects], dtype=np.intp)
    if cats.size and cats.max() >= table.n_categories:
        raise ContractError(f"graph category {cats.max()} outside table of "
                            f"{table.n_categories}")
    subj = np.array([s for s, _, _ in g.edges], dtype=np.intp)
    rels = np.array([r for _, r, _ in g.edges], dtype=np.intp)
    obj = np.array([o for _, _, o in g.edges], dtype=np.intp)
    nodes = T.gather_rows(table.objects, cats)
    edge_vecs = T.gather_rows(table.relations, rels)
    for layer in stack.layers:
        nodes, edge_vecs = layer(nodes, edge_vecs, subj, obj)
    return nodes


def predict_box_tensor(head: BoxHead, node_vecs: T.Tensor) -> T.Tensor:
    """Differentiable (N, 4) box coordinates in [0, 1], min before max."""
    if not np.all(np.isfinite(node_vecs.data)):
        raise ContractError("node vectors must be finite")
    return head(node_vecs)


def tag_categories(node_vecs: T.Tensor, g: SceneGraph,
                   n_categories: int) -> T.Tensor:
    """Node vectors with a one-hot category code appended.

    The code keeps the category legible to downstream heads no matter what
    the message passing does to the learned dimensions.
    """
    if n_categories < 1:
        raise ContractError(f"need at least one category, got {n_categories}")
    onehot = np.zeros((len(g.objects), n_categories))
    for i, (_, cat) in enumerate(g.objects):
        if not 0 <= cat < n_categories:
            raise ContractError(f"graph category {cat} outside the "
                                f"{n_categories}-category table")
        onehot[i, cat] = 1.0
    return T.concat([node_vecs, T.Tensor(onehot)], axis=1)


def predict_boxes(head: BoxHead, node_vecs: T.Tensor, g: SceneGraph) -> BoxLayout:
    n_categories = head.in_dim - node_vecs.shape[1]
    coords = predict_box_tensor(head,
                                tag_categories(node_vecs, g, n_categories)).data
    if coords.shape[0] != len(g.objects):
        raise ContractError(f"{coords.shape[0]} boxes for {len(g.objects)} objects")
    return BoxLayout([BoxEntry(ident, cat, tuple(row))
                      for (ident, cat), row in zip(g.objects, coords)])


def box_l1_loss(pred: T.Tensor, truth: np.ndarray) -> T.Tensor:
    """Per-object sum of coordinate absolute errors, averaged over objects."""
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[1] != 4:
        raise ContractError(f"box loss shapes {pred.shape} vs {truth.shape}")
    if pred.shape[0] == 0:
        raise ContractError("box loss over zero objects")
    return T.reduce_mean(T.reduce_sum(T.absolute(T.sub(pred, truth)), axis=1))


class Stage1Model(Block):
    """Embedding table + message passing + box head, as one unit.

    The head reads the node vector with the category code appended, so box
    sizes track the stated category even when the mixed vector drifts.
    """

    def __init__(self, n_categories: int, dim: int = 128, depth: int = 3,
                 seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.n_categories = n_categories
        self.dim = dim
        self.depth = depth
        self.table = EmbeddingTable("stage1.emb", n_categories, dim, rng)
        self.stack = GcnStack("stage1.gcn", dim, depth, rng)
        self.head = BoxHead("stage1.head", dim + n_categories, rng)
        self._children = [self.table, self.stack, self.head]

    def forward(self, g: SceneGraph):
        """Returns (node vectors (N, dim), box coordinates (N, 4))."""
        vecs = gcn_forward(g, self.table, self.stack)
        tagged = tag_categories(vecs, g, self.n_categories)
        return vecs, predict_box_tensor(self.head, tagged)

    def predict_layout(self, g: SceneGraph) -> BoxLayout:
        vecs = gcn_forward(g, self.table, self.stack)
        return predict_boxes(self.head, vecs, g)

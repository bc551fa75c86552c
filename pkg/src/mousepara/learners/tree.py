"""CART-style trees: Gini classification with cost-complexity pruning,
plus squared-error regression trees for the boosting module.

Split selection is deterministic: the split that most reduces impurity
wins; ties go to the lowest feature index, then the smallest split point.
Rows with feature value < threshold go left, >= threshold go right. All
traversals are iterative, so deeply grown trees cannot exhaust the
interpreter stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mousepara.learners.base import register


@dataclass
class TreeNode:
    n: int
    value: float  # P(class 1) at this node (classification) or mean response
    n_pos: int = 0  # positives among training rows (classification only)
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    leaf_id: int = -1  # assigned on regression trees for leaf-value updates

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class Tree:
    root: TreeNode
    n_features: int
    leaves: list[TreeNode] = field(default_factory=list)

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        """Leaf value for each row (class-1 fraction or regression mean)."""
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if node.is_leaf or rows.size == 0:
                out[rows] = node.value
                continue
            mask = X[rows, node.feature] < node.threshold
            stack.append((node.left, rows[mask]))
            stack.append((node.right, rows[~mask]))
        return out

    def leaf_assignment(self, X: np.ndarray) -> np.ndarray:
        """leaf_id per row (regression trees assign ids at grow time)."""
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0], dtype=int)
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if node.is_leaf or rows.size == 0:
                out[rows] = node.leaf_id
                continue
            mask = X[rows, node.feature] < node.threshold
            stack.append((node.left, rows[mask]))
            stack.append((node.right, rows[~mask]))
        return out


def _candidate_features(
    p: int, max_features: int | None, rng: np.random.Generator | None
) -> np.ndarray:
    if max_features is None or max_features >= p or rng is None:
        return np.arange(p)
    # sorted so the lowest-feature-index tie rule stays meaningful
    return np.sort(rng.choice(p, size=max_features, replace=False))


def _best_split_gini(
    X: np.ndarray, y: np.ndarray, rows: np.ndarray, features: np.ndarray
) -> tuple[float, int, float] | None:
    """Minimize summed child sizes times Gini: n_L*g_L + n_R*g_R."""
    n = rows.size
    y_node = y[rows]
    n1 = int(y_node.sum())
    best_cost = np.inf
    best: tuple[float, int, float] | None = None
    for f in features:
        x = X[rows, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        if xs[0] == xs[-1]:
            continue
        ys = y_node[order]
        cuts = np.nonzero(xs[1:] > xs[:-1])[0]  # split between i and i+1
        if cuts.size == 0:
            continue
        cum1 = np.cumsum(ys)
        n_left = cuts + 1.0
        n1_left = cum1[cuts].astype(float)
        n_right = n - n_left
        n1_right = n1 - n1_left
        # n_c * gini_c = n_c - (pos^2 + neg^2) / n_c, summed over children
        cost = (
            n
            - (n1_left**2 + (n_left - n1_left) ** 2) / n_left
            - (n1_right**2 + (n_right - n1_right) ** 2) / n_right
        )
        i = int(np.argmin(cost))  # first minimum -> smallest split point
        if cost[i] < best_cost:
            best_cost = float(cost[i])
            best = (best_cost, int(f), _midpoint(xs[cuts[i]], xs[cuts[i] + 1]))
    return best


def _midpoint(a: float, b: float) -> float:
    """Split value strictly above a, at most b (midpoints of adjacent
    floats can round onto a, which would send every row one way)."""
    mid = (a + b) / 2.0
    return float(b) if mid <= a else float(mid)


def _best_split_sse(
    X: np.ndarray, r: np.ndarray, rows: np.ndarray, features: np.ndarray
) -> tuple[float, int, float] | None:
    """Minimize within-child sum of squared errors of the response."""
    n = rows.size
    r_node = r[rows]
    total = r_node.sum()
    best_cost = np.inf
    best: tuple[float, int, float] | None = None
    for f in features:
        x = X[rows, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        if xs[0] == xs[-1]:
            continue
        rs = r_node[order]
        cuts = np.nonzero(xs[1:] > xs[:-1])[0]
        if cuts.size == 0:
            continue
        cum = np.cumsum(rs)
        n_left = cuts + 1.0
        s_left = cum[cuts]
        n_right = n - n_left
        s_right = total - s_left
        # SSE_L + SSE_R = const - (s_L^2/n_L + s_R^2/n_R); minimize the negated gain
        cost = -(s_left**2 / n_left + s_right**2 / n_right)
        i = int(np.argmin(cost))
        if cost[i] < best_cost:
            best_cost = float(cost[i])
            best = (best_cost, int(f), _midpoint(xs[cuts[i]], xs[cuts[i] + 1]))
    return best


def grow_classification(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray | None = None,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
    max_depth: int | None = None,
    min_split: int = 2,
) -> Tree:
    """Grow an (unpruned) Gini tree; subsampled features draw from rng per split.

    Nodes are expanded depth-first, left child first, so the sequence of
    rng draws (hence the forest) is reproducible.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if rows is None:
        rows = np.arange(X.shape[0])
    p = X.shape[1]

    def make_node(node_rows: np.ndarray) -> TreeNode:
        n_pos = int(y[node_rows].sum())
        return TreeNode(n=node_rows.size, n_pos=n_pos, value=n_pos / node_rows.size)

    root = make_node(np.asarray(rows))
    stack: list[tuple[TreeNode, np.ndarray, int]] = [(root, np.asarray(rows), 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        n = node_rows.size
        if (
            n < min_split
            or node.n_pos in (0, n)
            or (max_depth is not None and depth >= max_depth)
        ):
            continue
        features = _candidate_features(p, max_features, rng)
        split = _best_split_gini(X, y, node_rows, features)
        if split is None:
            continue
        _, f, thr = split
        mask = X[node_rows, f] < thr
        node.feature, node.threshold = f, thr
        node.left = make_node(node_rows[mask])
        node.right = make_node(node_rows[~mask])
        # right pushed first so the left subtree is expanded first
        stack.append((node.right, node_rows[~mask], depth + 1))
        stack.append((node.left, node_rows[mask], depth + 1))
    return Tree(root=root, n_features=p)


def grow_regression(
    X: np.ndarray,
    r: np.ndarray,
    max_depth: int,
    rows: np.ndarray | None = None,
    min_split: int = 2,
) -> tuple[Tree, np.ndarray]:
    """Depth-limited squared-error tree.

    Returns the tree plus the training rows' leaf assignment; leaves get
    sequential ids so callers can replace leaf values (boosting does).
    """
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    if rows is None:
        rows = np.arange(X.shape[0])
    rows = np.asarray(rows)
    p = X.shape[1]
    features = np.arange(p)
    leaves: list[TreeNode] = []
    assignment = np.empty(X.shape[0], dtype=int)

    root = TreeNode(n=rows.size, value=float(r[rows].mean()))
    stack: list[tuple[TreeNode, np.ndarray, int]] = [(root, rows, 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        split = None
        if node_rows.size >= min_split and depth < max_depth:
            split = _best_split_sse(X, r, node_rows, features)
        if split is None:
            node.leaf_id = len(leaves)
            leaves.append(node)
            assignment[node_rows] = node.leaf_id
            continue
        _, f, thr = split
        mask = X[node_rows, f] < thr
        node.feature, node.threshold = f, thr
        node.left = TreeNode(n=int(mask.sum()), value=float(r[node_rows[mask]].mean()))
        node.right = TreeNode(
            n=int((~mask).sum()), value=float(r[node_rows[~mask]].mean())
        )
        stack.append((node.right, node_rows[~mask], depth + 1))
        stack.append((node.left, node_rows[mask], depth + 1))
    return Tree(root=root, n_features=p, leaves=leaves), assignment


# ---------------------------------------------------------------------------
# Cost-complexity pruning (weakest link, misclassification risk)


def _misclassified_as_leaf(node: TreeNode) -> int:
    return min(node.n_pos, node.n - node.n_pos)


def _postorder(root: TreeNode) -> list[TreeNode]:
    order: list[TreeNode] = []
    stack = [root]
    while stack:
        node = stack.pop()
        order.append(node)
        if not node.is_leaf:
            stack.append(node.left)
            stack.append(node.right)
    order.reverse()  # children precede parents
    return order


def prune_cost_complexity(tree: Tree, cp: float, n_total: int) -> Tree:
    """Weakest-link pruning in place.

    Splits are collapsed while the weakest internal node's per-leaf risk
    improvement, normalized by the root-as-leaf risk (rpart's scaling),
    stays strictly below cp. With cp == 0 the tree is untouched.
    """
    if cp <= 0 or tree.root.is_leaf:
        return tree
    r_root = _misclassified_as_leaf(tree.root) / n_total
    if r_root == 0:
        return tree
    threshold = cp * r_root
    while not tree.root.is_leaf:
        stats: dict[int, tuple[int, int]] = {}  # id -> (mis leaves, leaf count)
        g_min = np.inf
        weakest: list[TreeNode] = []
        for node in _postorder(tree.root):
            if node.is_leaf:
                stats[id(node)] = (_misclassified_as_leaf(node), 1)
                continue
            ml, ll = stats[id(node.left)]
            mr, lr = stats[id(node.right)]
            mis, n_leaves = ml + mr, ll + lr
            stats[id(node)] = (mis, n_leaves)
            g = (_misclassified_as_leaf(node) - mis) / n_total / (n_leaves - 1)
            if g < g_min - 1e-15:
                g_min = g
                weakest = [node]
            elif g <= g_min + 1e-15:
                weakest.append(node)
        if g_min >= threshold:
            break
        for node in weakest:
            node.left = None
            node.right = None
            node.feature = -1
    return tree


# ---------------------------------------------------------------------------
# Learner registration: the pruned classification tree


def _fit_tree(X: np.ndarray, y: np.ndarray, hp: dict, seed: int):
    tree = grow_classification(X, y)
    prune_cost_complexity(tree, hp.get("cp", 0.0), n_total=X.shape[0])
    return tree, {}


def _predict_tree(tree: Tree, X: np.ndarray) -> np.ndarray:
    return (tree.predict_value(X) >= 0.5).astype(int)


def _proba_tree(tree: Tree, X: np.ndarray) -> np.ndarray:
    return tree.predict_value(X)


def _node_to_dict(node: TreeNode) -> dict:
    d = {"n": node.n, "n_pos": node.n_pos, "value": node.value, "leaf_id": node.leaf_id}
    if not node.is_leaf:
        d.update(
            feature=node.feature,
            threshold=node.threshold,
            left=_node_to_dict(node.left),
            right=_node_to_dict(node.right),
        )
    return d


def _node_from_dict(d: dict) -> TreeNode:
    node = TreeNode(
        n=d["n"], n_pos=d["n_pos"], value=d["value"], leaf_id=d.get("leaf_id", -1)
    )
    if "feature" in d:
        node.feature = d["feature"]
        node.threshold = d["threshold"]
        node.left = _node_from_dict(d["left"])
        node.right = _node_from_dict(d["right"])
    return node


def tree_to_dict(tree: Tree) -> dict:
    return {"n_features": tree.n_features, "root": _node_to_dict(tree.root)}


def tree_from_dict(d: dict) -> Tree:
    return Tree(root=_node_from_dict(d["root"]), n_features=d["n_features"])


register("tree", _fit_tree, _predict_tree, _proba_tree, tree_to_dict, tree_from_dict)

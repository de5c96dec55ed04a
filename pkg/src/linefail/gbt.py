"""Gradient boosted regression trees with logistic loss, exact greedy splits.

Candidate thresholds are the midpoints between consecutive distinct
present values of each feature; rows with a missing value follow a
learned default direction (both directions are scored, the better one is
kept). Leaf values are -G/(H + lambda); the ensemble acts in log-odds
space with shrinkage applied at accumulation time.

Determinism contract: ties in the split search resolve to the lowest
feature index, then the lowest threshold, then default-left, so a
parallel scan reduces to the same argmax as a sequential one.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import as_feature_matrix, as_label_array
from .errors import EmptyData, LinefailError, UnknownFeature

try:  # optional accelerator; the numpy scan below is the reference path
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

MODEL_MAGIC = "linefail-gbt-v1"


def _scan_level_feature_py(
    v_sorted,
    g_sorted,
    h_sorted,
    idx,
    node_of_row,
    node_size,
    g_tot,
    h_tot,
    lam,
    gamma,
    mcw,
    out_gain,
    out_thr,
    out_left,
):
    """Candidate split per active node for one feature, in one walk of the
    globally presorted order (value/gradient arrays aligned with ``idx``).

    Per-node accumulation follows the same sequential order as the
    per-node cumsum of the reference scan, so both growers pick
    bit-identical splits. Nodes with no missing value at this feature get
    exactly-zero missing aggregates, keeping the left/right direction
    gains an exact tie there.
    """
    m = len(idx)
    n_nodes = len(g_tot)
    gl = np.zeros(n_nodes)
    hl = np.zeros(n_nodes)
    gp = np.zeros(n_nodes)
    hp = np.zeros(n_nodes)
    present = np.zeros(n_nodes, dtype=np.int64)
    last_v = np.zeros(n_nodes)
    seen = np.zeros(n_nodes, dtype=np.bool_)
    node_ids = np.empty(m, dtype=np.int32)
    for t in range(m):
        nd = node_of_row[idx[t]]
        node_ids[t] = nd
        if nd >= 0:
            gp[nd] += g_sorted[t]
            hp[nd] += h_sorted[t]
            present[nd] += 1
    for t in range(m):
        nd = node_ids[t]
        if nd < 0:
            continue
        v = v_sorted[t]
        if seen[nd] and v != last_v[nd]:
            parent = g_tot[nd] * g_tot[nd] / (h_tot[nd] + lam)
            if present[nd] == node_size[nd]:
                g_missing = 0.0
                h_missing = 0.0
            else:
                g_missing = g_tot[nd] - gp[nd]
                h_missing = h_tot[nd] - hp[nd]
            gl_l = gl[nd] + g_missing
            hl_l = hl[nd] + h_missing
            gr_l = g_tot[nd] - gl_l
            hr_l = h_tot[nd] - hl_l
            if hl_l < mcw or hr_l < mcw:
                gain_l = -np.inf
            else:
                gain_l = 0.5 * (gl_l * gl_l / (hl_l + lam) + gr_l * gr_l / (hr_l + lam) - parent) - gamma
            gr_r = g_tot[nd] - gl[nd]
            hr_r = h_tot[nd] - hl[nd]
            if hl[nd] < mcw or hr_r < mcw:
                gain_r = -np.inf
            else:
                gain_r = 0.5 * (gl[nd] * gl[nd] / (hl[nd] + lam) + gr_r * gr_r / (hr_r + lam) - parent) - gamma
            use_left = gain_l >= gain_r
            cand = gain_l if use_left else gain_r
            if cand > out_gain[nd]:
                thr = 0.5 * last_v[nd] + 0.5 * v
                if thr <= last_v[nd]:  # adjacent floats: keep last_v strictly left
                    thr = v
                out_gain[nd] = cand
                out_thr[nd] = thr
                out_left[nd] = use_left
        gl[nd] += g_sorted[t]
        hl[nd] += h_sorted[t]
        last_v[nd] = v
        seen[nd] = True


if _HAVE_NUMBA:
    _scan_level_feature = _njit(cache=True, nogil=True)(_scan_level_feature_py)
else:  # pragma: no cover
    _scan_level_feature = None

_FORCE_NUMPY_SCAN = False  # tests flip this to exercise the reference path


def _use_kernel() -> bool:
    return _HAVE_NUMBA and not _FORCE_NUMPY_SCAN


@dataclass(frozen=True)
class GbtConfig:
    """Boosting hyperparameters; defaults are the final-model settings."""

    learning_rate: float = 0.01
    n_estimators: int = 100
    max_depth: int = 7
    min_child_weight: float = 5.0
    lambda_leaf: float = 1.0
    gamma: float = 0.0
    subsample_rows: float = 1.0
    subsample_cols: float = 1.0
    seed: int = 0
    patience: int = 10

    def __post_init__(self) -> None:
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_child_weight < 0 or self.lambda_leaf < 0 or self.gamma < 0:
            raise ValueError("min_child_weight, lambda_leaf, gamma must be >= 0")
        if not 0 < self.subsample_rows <= 1 or not 0 < self.subsample_cols <= 1:
            raise ValueError("subsample fractions must lie in (0, 1]")


PRELIM_SELECTION_CONFIG = GbtConfig(
    learning_rate=0.1, n_estimators=100, max_depth=3, min_child_weight=1.0
)


def grad_hess(p: float, y: int) -> tuple[float, float]:
    """Gradient and hessian of the logistic loss at probability p."""
    return p - y, p * (1.0 - p)


def split_gain(
    g_left: float,
    h_left: float,
    g_right: float,
    h_right: float,
    lambda_leaf: float,
    gamma: float,
) -> float:
    """Loss reduction of a split under L2-regularized leaf values."""
    lam = lambda_leaf
    parent = (g_left + g_right) ** 2 / (h_left + h_right + lam)
    return 0.5 * (g_left**2 / (h_left + lam) + g_right**2 / (h_right + lam) - parent) - gamma


@dataclass
class Tree:
    """Flat preorder arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


class _TreeGrower:
    def __init__(
        self,
        columns: list[np.ndarray],
        g: np.ndarray,
        h: np.ndarray,
        config: GbtConfig,
        col_subset: np.ndarray,
        pool: Optional[ThreadPoolExecutor] = None,
        n_chunks: int = 1,
    ):
        self.columns = columns
        self.g = g
        self.h = h
        self.config = config
        self.col_subset = col_subset
        self.pool = pool
        self.n_chunks = n_chunks
        self.in_left = np.zeros(len(g), dtype=bool)
        self.nodes: list[tuple] = []

    def grow(self, rows: np.ndarray, sorted_present: list[np.ndarray]) -> Tree:
        self.nodes = []
        self._grow_node(rows, sorted_present, depth=0)
        return _nodes_to_tree(self.nodes)

    def _scan_feature(
        self, slot: int, sorted_present: list[np.ndarray], g_tot: float, h_tot: float, n_node: int
    ) -> Optional[tuple[float, float, bool]]:
        """Best (gain, threshold, default_left) for one feature, or None."""
        cfg = self.config
        idx = sorted_present[slot]
        if len(idx) < 2:
            return None
        col = self.columns[self.col_subset[slot]]
        v = col[idx]
        gs = self.g[idx]
        hs = self.h[idx]
        cg = np.cumsum(gs)
        ch = np.cumsum(hs)
        cut = np.nonzero(v[:-1] != v[1:])[0]
        if len(cut) == 0:
            return None
        if len(idx) == n_node:  # nothing missing: keep the direction tie exact
            g_missing = 0.0
            h_missing = 0.0
        else:
            g_missing = g_tot - cg[-1]
            h_missing = h_tot - ch[-1]
        gl_present = cg[cut]
        hl_present = ch[cut]
        lam = cfg.lambda_leaf
        parent = g_tot * g_tot / (h_tot + lam)

        def gains(gl: np.ndarray, hl: np.ndarray) -> np.ndarray:
            gr = g_tot - gl
            hr = h_tot - hl
            out = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent) - cfg.gamma
            out[(hl < cfg.min_child_weight) | (hr < cfg.min_child_weight)] = -np.inf
            return out

        gain_left = gains(gl_present + g_missing, hl_present + h_missing)
        gain_right = gains(gl_present, hl_present)
        use_left = gain_left >= gain_right
        cand = np.where(use_left, gain_left, gain_right)
        j = int(np.argmax(cand))
        if not cand[j] > 0.0 or not np.isfinite(cand[j]):
            return None
        thr = 0.5 * v[cut[j]] + 0.5 * v[cut[j] + 1]
        if thr <= v[cut[j]]:  # adjacent floats: keep v[cut] strictly left
            thr = v[cut[j] + 1]
        return float(cand[j]), float(thr), bool(use_left[j])

    def _best_split(
        self, sorted_present: list[np.ndarray], g_tot: float, h_tot: float, n_node: int
    ) -> Optional[tuple[int, float, float, bool]]:
        n_feats = len(self.col_subset)
        if self.pool is not None and n_feats > 1:
            bounds = np.linspace(0, n_feats, min(self.n_chunks, n_feats) + 1).astype(int)
            chunks = self.pool.map(
                lambda se: [
                    self._scan_feature(slot, sorted_present, g_tot, h_tot, n_node)
                    for slot in range(se[0], se[1])
                ],
                [(s, e) for s, e in zip(bounds[:-1], bounds[1:])],
            )
            results = [r for chunk in chunks for r in chunk]
        else:
            results = [
                self._scan_feature(slot, sorted_present, g_tot, h_tot, n_node)
                for slot in range(n_feats)
            ]
        best = None
        for slot, res in enumerate(results):
            if res is not None and (best is None or res[0] > best[1]):
                best = (slot, res[0], res[1], res[2])
        if best is None:
            return None
        return best

    def _grow_node(self, rows: np.ndarray, sorted_present: list[np.ndarray], depth: int) -> int:
        pos = len(self.nodes)
        self.nodes.append(None)
        g_tot = float(np.add.reduce(self.g[rows]))
        h_tot = float(np.add.reduce(self.h[rows]))
        best = None
        if depth < self.config.max_depth and len(rows) >= 2:
            best = self._best_split(sorted_present, g_tot, h_tot, len(rows))
        if best is None:
            self.nodes[pos] = ("leaf", -g_tot / (h_tot + self.config.lambda_leaf))
            return pos
        slot, gain, threshold, default_left = best
        feature = int(self.col_subset[slot])
        col = self.columns[feature]
        values = col[rows]
        left_mask = values < threshold
        if default_left:
            left_mask |= np.isnan(values)
        rows_left = rows[left_mask]
        rows_right = rows[~left_mask]
        self.in_left[rows_left] = True
        left_lists = []
        right_lists = []
        for sl in sorted_present:
            mask = self.in_left[sl]
            left_lists.append(sl[mask])
            right_lists.append(sl[~mask])
        self.in_left[rows_left] = False
        sorted_present.clear()  # parent lists are dead weight during recursion
        left_pos = self._grow_node(rows_left, left_lists, depth + 1)
        right_pos = self._grow_node(rows_right, right_lists, depth + 1)
        self.nodes[pos] = ("split", feature, threshold, default_left, gain, left_pos, right_pos)
        return pos


def _nodes_to_tree(nodes: list[tuple]) -> Tree:
    """Freeze ("leaf", value) / ("split", feat, thr, dleft, gain, l, r)
    records into flat preorder arrays."""
    order: list[int] = []

    def visit(pos: int) -> None:
        order.append(pos)
        rec = nodes[pos]
        if rec[0] == "split":
            visit(rec[5])
            visit(rec[6])

    visit(0)
    remap = {old: new for new, old in enumerate(order)}
    n = len(order)
    tree = Tree(
        feature=np.full(n, -1, dtype=np.int32),
        threshold=np.zeros(n, dtype=np.float64),
        default_left=np.zeros(n, dtype=bool),
        left=np.full(n, -1, dtype=np.int32),
        right=np.full(n, -1, dtype=np.int32),
        value=np.zeros(n, dtype=np.float64),
        gain=np.zeros(n, dtype=np.float64),
    )
    for new, old in enumerate(order):
        rec = nodes[old]
        if rec[0] == "leaf":
            tree.value[new] = rec[1]
        else:
            _, feat, thr, dleft, gain, left_pos, right_pos = rec
            tree.feature[new] = feat
            tree.threshold[new] = thr
            tree.default_left[new] = dleft
            tree.gain[new] = gain
            tree.left[new] = remap[left_pos]
            tree.right[new] = remap[right_pos]
    return tree


def _grow_levelwise(
    columns: list[np.ndarray],
    g: np.ndarray,
    h: np.ndarray,
    config: GbtConfig,
    col_subset: np.ndarray,
    sorted_lists: list[np.ndarray],
    rows: np.ndarray,
    pool: Optional[ThreadPoolExecutor] = None,
    n_chunks: int = 1,
) -> Tree:
    """Level-wise growth: one kernel walk per (feature, level) over the
    globally presorted order, nodes resolved through a row->node map.

    Chooses the same splits as _TreeGrower (identical accumulation order
    and tie-breaks); only the traversal strategy differs.
    """
    lam = config.lambda_leaf
    node_of_row = np.full(len(g), -1, dtype=np.int32)
    nodes: list[tuple] = [None]
    g_root = float(np.add.reduce(g[rows]))
    h_root = float(np.add.reduce(h[rows]))
    sorted_lists = list(sorted_lists)  # compacted locally, never in place
    slot_values = [columns[col_subset[s]][sorted_lists[s]] for s in range(len(col_subset))]
    slot_g = [g[idx] for idx in sorted_lists]
    slot_h = [h[idx] for idx in sorted_lists]
    level = [(0, rows, g_root, h_root)]
    depth = 0
    n_feats = len(col_subset)
    walk_budget = len(rows)
    while level:
        if depth >= config.max_depth:
            for pos, rws, gt, ht in level:
                nodes[pos] = ("leaf", -gt / (ht + lam))
            break
        scannable = []
        for entry in level:
            pos, rws, gt, ht = entry
            if len(rws) >= 2:
                scannable.append(entry)
            else:
                nodes[pos] = ("leaf", -gt / (ht + lam))
        if not scannable:
            break
        n_nodes = len(scannable)
        for slot, (_, rws, _, _) in enumerate(scannable):
            node_of_row[rws] = slot
        g_tot = np.array([gt for _, _, gt, _ in scannable])
        h_tot = np.array([ht for _, _, _, ht in scannable])
        node_size = np.array([len(rws) for _, rws, _, _ in scannable], dtype=np.int64)

        def scan_slot(s: int):
            out_gain = np.full(n_nodes, -np.inf)
            out_thr = np.zeros(n_nodes)
            out_left = np.zeros(n_nodes, dtype=np.bool_)
            _scan_level_feature(
                slot_values[s],
                slot_g[s],
                slot_h[s],
                sorted_lists[s],
                node_of_row,
                node_size,
                g_tot,
                h_tot,
                lam,
                config.gamma,
                config.min_child_weight,
                out_gain,
                out_thr,
                out_left,
            )
            return out_gain, out_thr, out_left

        if pool is not None and n_feats > 1:
            results = list(pool.map(scan_slot, range(n_feats)))
        else:
            results = [scan_slot(s) for s in range(n_feats)]

        best_gain = np.full(n_nodes, -np.inf)
        best_feat = np.full(n_nodes, -1, dtype=np.int64)
        best_thr = np.zeros(n_nodes)
        best_left = np.zeros(n_nodes, dtype=bool)
        for s in range(n_feats):  # ascending feature order resolves ties
            out_gain, out_thr, out_left = results[s]
            better = out_gain > best_gain
            best_gain[better] = out_gain[better]
            best_feat[better] = col_subset[s]
            best_thr[better] = out_thr[better]
            best_left[better] = out_left[better]

        next_level = []
        for slot, (pos, rws, gt, ht) in enumerate(scannable):
            node_of_row[rws] = -1
            if not best_gain[slot] > 0.0 or not np.isfinite(best_gain[slot]):
                nodes[pos] = ("leaf", -gt / (ht + lam))
                continue
            feat = int(best_feat[slot])
            threshold = float(best_thr[slot])
            values = columns[feat][rws]
            left_mask = values < threshold
            if best_left[slot]:
                left_mask |= np.isnan(values)
            rows_left = rws[left_mask]
            rows_right = rws[~left_mask]
            left_pos = len(nodes)
            nodes.append(None)
            right_pos = len(nodes)
            nodes.append(None)
            nodes[pos] = (
                "split",
                feat,
                threshold,
                bool(best_left[slot]),
                float(best_gain[slot]),
                left_pos,
                right_pos,
            )
            next_level.append(
                (left_pos, rows_left, float(np.add.reduce(g[rows_left])), float(np.add.reduce(h[rows_left])))
            )
            next_level.append(
                (right_pos, rows_right, float(np.add.reduce(g[rows_right])), float(np.add.reduce(h[rows_right])))
            )
        level = next_level
        depth += 1
        # rows settled into leaves contribute nothing; drop them from the
        # walk arrays once they are the majority
        active = sum(len(rws) for _, rws, _, _ in level)
        if level and depth < config.max_depth and active < walk_budget // 2:
            alive = np.zeros(len(g), dtype=bool)
            for _, rws, _, _ in level:
                alive[rws] = True
            for s in range(n_feats):
                keep = alive[sorted_lists[s]]
                sorted_lists[s] = sorted_lists[s][keep]
                slot_values[s] = slot_values[s][keep]
                slot_g[s] = slot_g[s][keep]
                slot_h[s] = slot_h[s][keep]
            walk_budget = active
    return _nodes_to_tree(nodes)


def _grow(
    columns: list[np.ndarray],
    g: np.ndarray,
    h: np.ndarray,
    config: GbtConfig,
    col_subset: np.ndarray,
    sorted_lists: list[np.ndarray],
    rows: np.ndarray,
    pool: Optional[ThreadPoolExecutor] = None,
    n_chunks: int = 1,
) -> Tree:
    if _use_kernel():
        return _grow_levelwise(
            columns, g, h, config, col_subset, sorted_lists, rows, pool, n_chunks
        )
    grower = _TreeGrower(columns, g, h, config, col_subset, pool=pool, n_chunks=n_chunks)
    return grower.grow(rows, sorted_lists)


def _presort_columns(columns: list[np.ndarray]) -> list[np.ndarray]:
    """Per column: row indices of present values, ascending by value."""
    out = []
    for col in columns:
        order = np.argsort(col, kind="stable").astype(np.int32)
        n_present = len(col) - int(np.count_nonzero(np.isnan(col)))
        out.append(order[:n_present])  # NaN sorts last
    return out


def grow_tree(X, g, h, config: GbtConfig) -> Tree:
    """Grow a single tree on explicit gradients (no subsampling)."""
    X = as_feature_matrix(X)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    columns = [np.ascontiguousarray(X[:, f]) for f in range(X.shape[1])]
    sorted_present = _presort_columns(columns)
    return _grow(
        columns,
        g,
        h,
        config,
        np.arange(X.shape[1]),
        sorted_present,
        np.arange(X.shape[0], dtype=np.int32),
    )


def predict_tree(tree: Tree, columns: list[np.ndarray], row_idx: np.ndarray) -> np.ndarray:
    """Leaf value per row, vectorized over a node stack."""
    out = np.empty(len(row_idx), dtype=np.float64)
    stack = [(0, np.arange(len(row_idx)))]
    while stack:
        node, positions = stack.pop()
        if tree.feature[node] < 0:
            out[positions] = tree.value[node]
            continue
        values = columns[tree.feature[node]][row_idx[positions]]
        left = values < tree.threshold[node]
        if tree.default_left[node]:
            left |= np.isnan(values)
        stack.append((tree.right[node], positions[~left]))
        stack.append((tree.left[node], positions[left]))
    return out


@dataclass
class Ensemble:
    """Fitted model: initial log-odds plus shrunken tree increments."""

    base_score: float
    trees: list[Tree]
    config: GbtConfig
    feature_names: list[str]

    def _check_width(self, X: np.ndarray) -> None:
        if X.shape[1] != len(self.feature_names):
            raise UnknownFeature(
                f"model expects {len(self.feature_names)} columns "
                f"({self.feature_names[:3]}...), got {X.shape[1]}"
            )

    def predict_margin(self, X) -> np.ndarray:
        X = as_feature_matrix(X)
        self._check_width(X)
        columns = [np.ascontiguousarray(X[:, f]) for f in range(X.shape[1])]
        row_idx = np.arange(X.shape[0])
        margin = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            margin += self.config.learning_rate * predict_tree(tree, columns, row_idx)
        return margin

    def predict_scores(self, X) -> np.ndarray:
        """Failure probabilities in (0, 1)."""
        return _sigmoid(self.predict_margin(X))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def fit(
    X,
    y,
    config: GbtConfig,
    feature_names: Optional[Sequence[str]] = None,
    eval_set: Optional[tuple] = None,
    threads: int = 1,
) -> Ensemble:
    """Boost ``config.n_estimators`` rounds of exact-greedy trees.

    Each round draws a seeded row/column subsample; when ``eval_set``
    (X_val, y_val) is given, training stops after ``config.patience``
    rounds without a validation log-loss improvement and the ensemble is
    truncated to its best round.
    """
    X = as_feature_matrix(X)
    y = as_label_array(y).astype(np.float64)
    n, n_features = X.shape
    if n == 0 or len(y) != n:
        raise EmptyData(f"got {n} rows and {len(y)} labels")
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(n_features)]
    feature_names = list(feature_names)

    mean = min(max(float(y.mean()), 1e-15), 1.0 - 1e-15)
    base_score = math.log(mean / (1.0 - mean))
    ensemble = Ensemble(base_score, [], config, feature_names)
    if config.n_estimators == 0:
        return ensemble

    columns = [np.ascontiguousarray(X[:, f]) for f in range(n_features)]
    presorted = _presort_columns(columns)
    all_rows = np.arange(n, dtype=np.int32)
    row_pos = np.arange(n)
    margin = np.full(n, base_score, dtype=np.float64)
    if eval_set is not None:
        X_val = as_feature_matrix(eval_set[0])
        y_val = as_label_array(eval_set[1]).astype(np.float64)
        val_columns = [np.ascontiguousarray(X_val[:, f]) for f in range(X_val.shape[1])]
        val_margin = np.full(len(y_val), base_score, dtype=np.float64)
        best_loss = math.inf
        best_round = -1

    rng = np.random.default_rng(config.seed)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    membership = np.zeros(n, dtype=bool)
    try:
        for round_no in range(config.n_estimators):
            p = _sigmoid(margin)
            g = p - y
            h = p * (1.0 - p)
            if config.subsample_rows < 1.0:
                n_sub = max(1, int(round(config.subsample_rows * n)))
                rows = np.sort(rng.choice(n, size=n_sub, replace=False)).astype(np.int32)
            else:
                rows = all_rows
            if config.subsample_cols < 1.0:
                n_cols = max(1, int(round(config.subsample_cols * n_features)))
                col_subset = np.sort(rng.choice(n_features, size=n_cols, replace=False))
            else:
                col_subset = np.arange(n_features)
            if rows is all_rows:
                root_lists = [presorted[f] for f in col_subset]
            else:
                membership[rows] = True
                root_lists = [presorted[f][membership[presorted[f]]] for f in col_subset]
                membership[rows] = False
            tree = _grow(
                columns, g, h, config, col_subset, root_lists, rows, pool=pool, n_chunks=threads
            )
            ensemble.trees.append(tree)
            margin += config.learning_rate * predict_tree(tree, columns, row_pos)
            if eval_set is not None:
                val_margin += config.learning_rate * predict_tree(
                    tree, val_columns, np.arange(len(y_val))
                )
                pv = np.clip(_sigmoid(val_margin), 1e-15, 1.0 - 1e-15)
                loss = float(-np.mean(y_val * np.log(pv) + (1 - y_val) * np.log1p(-pv)))
                if loss < best_loss:
                    best_loss = loss
                    best_round = round_no
                elif round_no - best_round > config.patience:
                    ensemble.trees = ensemble.trees[: best_round + 1]
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    return ensemble


def feature_importance(ensemble: Ensemble) -> dict[str, float]:
    """Sum of squared split gains per feature, averaged over trees."""
    if not ensemble.trees:
        return {}
    acc = {name: 0.0 for name in ensemble.feature_names}
    for tree in ensemble.trees:
        for i in range(tree.n_nodes):
            f = tree.feature[i]
            if f >= 0:
                acc[ensemble.feature_names[f]] += float(tree.gain[i]) ** 2
    n_trees = len(ensemble.trees)
    return {name: total / n_trees for name, total in acc.items()}


def split_counts(ensemble: Ensemble) -> dict[str, int]:
    """How often each feature was selected for splitting."""
    counts = {name: 0 for name in ensemble.feature_names}
    for tree in ensemble.trees:
        for i in range(tree.n_nodes):
            if tree.feature[i] >= 0:
                counts[ensemble.feature_names[tree.feature[i]]] += 1
    return counts


def select_top_k(
    X,
    y,
    feature_names: Sequence[str],
    k: int,
    config: GbtConfig = PRELIM_SELECTION_CONFIG,
    threads: int = 1,
) -> list[str]:
    """Top-k features of a preliminary fit, by squared-gain importance.

    Ties break by column order; when fewer than k features carry any
    importance the list is padded with zero-importance features in column
    order (never longer than the column count).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ensemble = fit(X, y, config, feature_names=feature_names, threads=threads)
    importance = feature_importance(ensemble)
    order = {name: pos for pos, name in enumerate(feature_names)}
    ranked = sorted(feature_names, key=lambda name: (-importance.get(name, 0.0), order[name]))
    return ranked[: min(k, len(ranked))]


def save_ensemble(ensemble: Ensemble, path: str | Path) -> None:
    """Versioned text format: config header, base score, preorder trees."""
    cfg = ensemble.config
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MODEL_MAGIC}\n")
        for key in (
            "learning_rate",
            "n_estimators",
            "max_depth",
            "min_child_weight",
            "lambda_leaf",
            "gamma",
            "subsample_rows",
            "subsample_cols",
            "seed",
            "patience",
        ):
            fh.write(f"{key}={getattr(cfg, key)!r}\n")
        fh.write(f"base_score={ensemble.base_score!r}\n")
        fh.write(f"features={','.join(ensemble.feature_names)}\n")
        fh.write(f"trees={len(ensemble.trees)}\n")
        for t, tree in enumerate(ensemble.trees):
            fh.write(f"tree {t}\n")

            def write_node(node: int) -> None:
                if tree.feature[node] < 0:
                    fh.write(f"leaf {float(tree.value[node])!r}\n")
                else:
                    name = ensemble.feature_names[tree.feature[node]]
                    flag = "L" if tree.default_left[node] else "R"
                    fh.write(
                        f"split {name} {float(tree.threshold[node])!r} {flag} "
                        f"{float(tree.gain[node])!r}\n"
                    )
                    write_node(int(tree.left[node]))
                    write_node(int(tree.right[node]))

            write_node(0)


def load_ensemble(path: str | Path) -> Ensemble:
    with open(path, "r", encoding="utf-8") as fh:
        if fh.readline().strip() != MODEL_MAGIC:
            raise LinefailError(f"{path}: not a {MODEL_MAGIC} file")
        header: dict[str, str] = {}
        for _ in range(10):
            key, _, value = fh.readline().strip().partition("=")
            header[key] = value
        config = GbtConfig(
            learning_rate=float(header["learning_rate"]),
            n_estimators=int(header["n_estimators"]),
            max_depth=int(header["max_depth"]),
            min_child_weight=float(header["min_child_weight"]),
            lambda_leaf=float(header["lambda_leaf"]),
            gamma=float(header["gamma"]),
            subsample_rows=float(header["subsample_rows"]),
            subsample_cols=float(header["subsample_cols"]),
            seed=int(header["seed"]),
            patience=int(header["patience"]),
        )
        base_score = float(fh.readline().strip().partition("=")[2])
        features_line = fh.readline().rstrip("\n").partition("=")[2]
        feature_names = features_line.split(",") if features_line else []
        slot = {name: i for i, name in enumerate(feature_names)}
        n_trees = int(fh.readline().strip().partition("=")[2])
        trees = []
        for _ in range(n_trees):
            marker = fh.readline()
            if not marker.startswith("tree "):
                raise LinefailError(f"{path}: expected tree marker, got {marker!r}")
            nodes: list[tuple] = []

            def read_node() -> int:
                pos = len(nodes)
                nodes.append(None)
                parts = fh.readline().split()
                if parts[0] == "leaf":
                    nodes[pos] = ("leaf", float(parts[1]))
                else:
                    _, name, thr, flag, gain = parts
                    left_pos = read_node()
                    right_pos = read_node()
                    nodes[pos] = (
                        "split",
                        slot[name],
                        float(thr),
                        flag == "L",
                        float(gain),
                        left_pos,
                        right_pos,
                    )
                return pos

            read_node()
            n = len(nodes)
            tree = Tree(
                feature=np.full(n, -1, dtype=np.int32),
                threshold=np.zeros(n, dtype=np.float64),
                default_left=np.zeros(n, dtype=bool),
                left=np.full(n, -1, dtype=np.int32),
                right=np.full(n, -1, dtype=np.int32),
                value=np.zeros(n, dtype=np.float64),
                gain=np.zeros(n, dtype=np.float64),
            )
            for i, node in enumerate(nodes):
                if node[0] == "leaf":
                    tree.value[i] = node[1]
                else:
                    _, feat, thr, dleft, gain, lp, rp = node
                    tree.feature[i] = feat
                    tree.threshold[i] = thr
                    tree.default_left[i] = dleft
                    tree.gain[i] = gain
                    tree.left[i] = lp
                    tree.right[i] = rp
            trees.append(tree)
    return Ensemble(base_score, trees, config, feature_names)


class BoostedTreesClassifier(BaseEstimator, ClassifierMixin):
    """Scikit-learn style front end; X is a float matrix with NaN for
    missing cells."""

    def __init__(
        self,
        learning_rate: float = 0.01,
        n_estimators: int = 100,
        max_depth: int = 7,
        min_child_weight: float = 5.0,
        lambda_leaf: float = 1.0,
        gamma: float = 0.0,
        subsample_rows: float = 1.0,
        subsample_cols: float = 1.0,
        seed: int = 0,
        patience: int = 10,
        threads: int = 1,
    ):
        self.learning_rate = learning_rate
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_child_weight = min_child_weight
        self.lambda_leaf = lambda_leaf
        self.gamma = gamma
        self.subsample_rows = subsample_rows
        self.subsample_cols = subsample_cols
        self.seed = seed
        self.patience = patience
        self.threads = threads

    def _config(self) -> GbtConfig:
        return GbtConfig(
            learning_rate=self.learning_rate,
            n_estimators=self.n_estimators,
            max_depth=self.max_depth,
            min_child_weight=self.min_child_weight,
            lambda_leaf=self.lambda_leaf,
            gamma=self.gamma,
            subsample_rows=self.subsample_rows,
            subsample_cols=self.subsample_cols,
            seed=self.seed,
            patience=self.patience,
        )

    def fit(self, X, y, eval_set=None, feature_names=None):
        self.ensemble_ = fit(
            X,
            y,
            self._config(),
            feature_names=feature_names,
            eval_set=eval_set,
            threads=self.threads,
        )
        self.n_features_in_ = len(self.ensemble_.feature_names)
        importance = feature_importance(self.ensemble_)
        self.feature_importances_ = np.array(
            [importance.get(name, 0.0) for name in self.ensemble_.feature_names]
        )
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X) -> np.ndarray:
        p = self.ensemble_.predict_scores(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.ensemble_.predict_scores(X) >= 0.5).astype(int)

"""Tree-structure dynamic programming for discrete-time optimal control.

The tree holds every state reachable from ``x0`` with piecewise-constant
controls from a finite set. Nodes of one level that lie within ``eps_T`` of an
earlier node are merged into it (geometric pruning). The value function is then
computed backwards on the nodes and the optimal controls are read off along
the argmin branches.
"""
from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

# dyn(states (N, d), control, t) -> successor states (N, d)
Dynamics = Callable[[np.ndarray, object, float], np.ndarray]


class TreeDynamicsError(FloatingPointError):
    def __init__(self, level: int, path: Sequence[int]):
        self.level, self.path = level, list(path)
        super().__init__(f"non-finite state at level {level} along control path {self.path}")


@dataclass(frozen=True)
class ControlGrid:
    """Finite control set ``{a_1, ..., a_M}``; scalar values are kept sorted."""

    values: tuple
    bounds: Optional[tuple] = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.size == 0:
            raise ValueError("control grid needs at least one value")
        if arr.ndim == 1:
            if np.any(np.diff(arr) <= 0):
                raise ValueError("scalar controls must be sorted and duplicate free")
            if self.bounds is not None:
                lo, hi = self.bounds
                if arr[0] < lo or arr[-1] > hi:
                    raise ValueError(f"controls {arr.tolist()} leave the interval [{lo}, {hi}]")
        elif arr.ndim == 2:
            if len(np.unique(arr, axis=0)) != len(arr):
                raise ValueError("duplicate control vectors")
        else:
            raise ValueError("controls must be scalars or vectors")
        object.__setattr__(self, "values", tuple(map(tuple, arr)) if arr.ndim == 2 else tuple(arr.tolist()))

    @classmethod
    def uniform(cls, lo: float, hi: float, M: int) -> "ControlGrid":
        vals = [lo] if M == 1 else np.linspace(lo, hi, M).tolist()
        return cls(tuple(vals), (lo, hi))

    @property
    def M(self) -> int:
        return len(self.values)

    def __len__(self):
        return self.M

    def __getitem__(self, j):
        v = self.values[j]
        return np.asarray(v) if isinstance(v, tuple) else v

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass
class Tree:
    """Level-wise storage; node ``i`` of level ``n`` has global id ``offsets[n] + i``."""

    states: list
    children: list
    parent: list
    control_index: list
    controls: list
    dt: float
    eps_T: float
    t0: float = 0.0
    merges: list = field(default_factory=list)

    @property
    def n_t(self) -> int:
        return len(self.states) - 1

    @property
    def M(self) -> int:
        return len(self.controls)

    @property
    def level_sizes(self) -> list:
        return [len(s) for s in self.states]

    @property
    def n_nodes(self) -> int:
        return int(sum(self.level_sizes))

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.level_sizes)[:-1]]).astype(int)

    def time(self, level: int) -> float:
        return self.t0 + level * self.dt


def full_tree_count(M: int, n_t: int) -> int:
    """Node count of the unpruned tree, ``(M^(n_t+1) - 1) / (M - 1)``."""
    if M < 1 or n_t < 0:
        raise ValueError("need M >= 1 and n_t >= 0")
    if M == 1:
        return n_t + 1
    return (M ** (n_t + 1) - 1) // (M - 1)


def pruning_ratio(tree: Tree, M: Optional[int] = None, n_t: Optional[int] = None) -> float:
    M = tree.M if M is None else M
    n_t = tree.n_t if n_t is None else n_t
    return full_tree_count(M, n_t) / tree.n_nodes


def _merge(cand: np.ndarray, eps: float) -> np.ndarray:
    """Representative (earliest accepted candidate within ``eps``) of every candidate."""
    K = len(cand)
    rep = np.arange(K)
    if K < 2:
        return rep
    if eps == 0.0:
        # bitwise row comparison; adding 0.0 maps -0.0 to 0.0
        rows = np.ascontiguousarray(cand + 0.0)
        keys = rows.view(np.dtype((np.void, rows.dtype.itemsize * rows.shape[1]))).reshape(-1)
        _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        return first[inverse.reshape(-1)]
    pairs = cKDTree(cand).query_pairs(eps, output_type="ndarray")
    if len(pairs) == 0:
        return rep
    pairs = np.sort(pairs, axis=1)
    pairs = pairs[np.lexsort((pairs[:, 0], pairs[:, 1]))]
    # neighbours j < i, grouped by i in increasing order
    starts = np.searchsorted(pairs[:, 1], np.arange(K))
    ends = np.searchsorted(pairs[:, 1], np.arange(K), side="right")
    accepted = np.ones(K, dtype=bool)
    for i in np.unique(pairs[:, 1]):
        nb = pairs[starts[i]:ends[i], 0]
        nb = nb[accepted[nb]]
        if nb.size:
            accepted[i] = False
            rep[i] = nb.min()
    return rep


def _path_to(tree_parent, tree_ctrl, level, idx):
    path = []
    while level > 0:
        path.append(int(tree_ctrl[level][idx]))
        idx = tree_parent[level][idx]
        level -= 1
    return path[::-1]


def build_tree(dyn: Dynamics, x0, controls, dt: float, n_t: int, eps_T: float = 0.0,
               prune_dims: Optional[slice] = None, t0: float = 0.0,
               max_nodes: Optional[int] = None) -> Tree:
    """Expand all control sequences level by level and prune close nodes.

    Parameters
    ----------
    dyn : callable
        ``dyn(X, a, t)`` mapping a batch of states at time ``t`` to their
        successors under the constant control ``a``.
    x0 : array_like
        Root state.
    controls : ControlGrid or sequence
    dt : float
    n_t : int
        Number of levels after the root.
    eps_T : float
        Merge radius in the Euclidean norm. ``0`` merges exact duplicates only.
    prune_dims : slice, optional
        Coordinates entering the distance (all by default).
    max_nodes : int, optional
        Abort with ``MemoryError`` once the tree grows beyond this size.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_t < 0:
        raise ValueError("n_t must be non-negative")
    if eps_T < 0:
        raise ValueError("eps_T must be non-negative")
    ctrl = list(controls) if not isinstance(controls, ControlGrid) else [controls[j] for j in range(controls.M)]
    M = len(ctrl)
    if M == 0:
        raise ValueError("empty control set")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    sel = slice(None) if prune_dims is None else prune_dims
    states = [x0[None, :]]
    parent = [np.array([-1])]
    cidx = [np.array([-1])]
    children = []
    merges = []
    total = 1
    for n in range(n_t):
        X = states[-1]
        N = len(X)
        t = t0 + n * dt
        succ = np.empty((N, M, X.shape[1]))
        for j, a in enumerate(ctrl):
            succ[:, j] = dyn(X, a, t)
        cand = succ.reshape(N * M, -1)
        bad = ~np.all(np.isfinite(cand), axis=1)
        if bad.any():
            k = int(np.argmax(bad))
            raise TreeDynamicsError(n + 1, _path_to(parent, cidx, n, k // M) + [k % M])
        rep = _merge(np.ascontiguousarray(cand[:, sel]), eps_T)
        keep = rep == np.arange(len(rep))
        new_id = np.cumsum(keep) - 1
        child = new_id[rep].reshape(N, M)
        children.append(child)
        merged = np.flatnonzero(~keep)
        merges.append(np.stack([merged // M, merged % M, new_id[rep[merged]]], axis=1))
        kept = np.flatnonzero(keep)
        states.append(cand[kept])
        parent.append(kept // M)
        cidx.append(kept % M)
        total += len(kept)
        log.debug("level %d: %d candidates, %d nodes", n + 1, len(cand), len(kept))
        if max_nodes is not None and total > max_nodes:
            raise MemoryError(f"tree exceeds {max_nodes} nodes at level {n + 1}")
    return Tree(states, children, parent, cidx, ctrl, float(dt), float(eps_T), float(t0), merges)


@dataclass
class ValueTable:
    values: list
    policy: list
    lam: float

    @property
    def root(self) -> float:
        return float(self.values[0][0])


# L(X (N, d), a, t) -> (N,) running cost; g(X) -> (N,) terminal cost
def backward_dp(tree: Tree, L: Optional[Callable], g: Callable, lam: float = 0.0,
                dt: Optional[float] = None) -> ValueTable:
    """Backward recursion ``V^n = min_j [dt L(x, a_j, t_n) + exp(-lam dt) V^{n+1}(child_j)]``."""
    dt = tree.dt if dt is None else dt
    disc = np.exp(-lam * dt)
    V = [None] * (tree.n_t + 1)
    policy = [None] * tree.n_t
    V[-1] = np.asarray(g(tree.states[-1]), dtype=float).reshape(-1)
    for n in range(tree.n_t - 1, -1, -1):
        X = tree.states[n]
        cost = disc * V[n + 1][tree.children[n]]
        if L is not None:
            t = tree.time(n)
            for j, a in enumerate(tree.controls):
                cost[:, j] += dt * np.asarray(L(X, a, t), dtype=float).reshape(-1)
        j_best = np.argmin(cost, axis=1)
        policy[n] = j_best
        V[n] = cost[np.arange(len(X)), j_best]
    return ValueTable(V, policy, lam)


def synthesize_control(tree: Tree, values: ValueTable):
    """Follow the argmin branches from the root.

    Returns the control sequence, the control indices and the global node ids
    of the visited path.
    """
    offs = tree.offsets
    idx = 0
    path = [0]
    seq, jseq = [], []
    for n in range(tree.n_t):
        j = int(values.policy[n][idx])
        seq.append(tree.controls[j])
        jseq.append(j)
        idx = int(tree.children[n][idx, j])
        path.append(int(offs[n + 1] + idx))
    return seq, jseq, path


def _accumulate(running, terminal, disc):
    # same association order as the backward recursion
    total = terminal
    for r in reversed(running):
        total = r + disc * total
    return total


def path_cost(tree: Tree, path_idx: Sequence[int], L, g, lam: float = 0.0) -> float:
    """Discrete cost along a sequence of control indices starting at the root."""
    idx = 0
    running = []
    for n, j in enumerate(path_idx):
        X = tree.states[n][idx:idx + 1]
        if L is not None:
            running.append(tree.dt * float(np.asarray(L(X, tree.controls[j], tree.time(n))).reshape(-1)[0]))
        else:
            running.append(0.0)
        idx = int(tree.children[n][idx, j])
    terminal = float(np.asarray(g(tree.states[-1][idx:idx + 1])).reshape(-1)[0])
    return _accumulate(running, terminal, np.exp(-lam * tree.dt))


def enumerate_costs(dyn: Dynamics, x0, controls, dt: float, n_t: int, L, g, lam: float = 0.0,
                    t0: float = 0.0):
    """Cost of every control sequence by direct simulation (exponential in ``n_t``)."""
    ctrl = list(controls) if not isinstance(controls, ControlGrid) else [controls[j] for j in range(controls.M)]
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))[None, :]
    disc = np.exp(-lam * dt)
    out = {}
    for seq in itertools.product(range(len(ctrl)), repeat=n_t):
        x = x0
        running = []
        for n, j in enumerate(seq):
            t = t0 + n * dt
            running.append(0.0 if L is None else dt * float(np.asarray(L(x, ctrl[j], t)).reshape(-1)[0]))
            x = dyn(x, ctrl[j], t)
        out[seq] = _accumulate(running, float(np.asarray(g(x)).reshape(-1)[0]), disc)
    return out


def write_tree_csv(path, tree: Tree, values: Optional[ValueTable] = None):
    """One row per node: node id, level, parent id, control index, value."""
    offs = tree.offsets
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "level", "parent_id", "control_index", "value"])
        for n in range(tree.n_t + 1):
            par = tree.parent[n]
            for i in range(len(tree.states[n])):
                pid = -1 if n == 0 else int(offs[n - 1] + par[i])
                val = "" if values is None else repr(float(values.values[n][i]))
                w.writerow([int(offs[n] + i), n, pid, int(tree.control_index[n][i]), val])

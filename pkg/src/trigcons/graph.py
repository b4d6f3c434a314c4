"""Weighted digraphs, their Laplacians and the Perron-Frobenius normal form.

Conventions used throughout the package:

* agents are indexed ``0 .. m-1`` in the Python API (configuration files and
  CSV outputs are 1-based);
* ``weights[i, j] = a_ij > 0`` means agent ``j`` sends information to agent
  ``i`` (``j`` is an in-neighbour of ``i``);
* ``L = D - A`` with ``D`` the diagonal of in-degrees, so every row of ``L``
  sums to zero.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ROW_SUM_TOL = 1e-12


class GraphError(ValueError):
    """Invalid graph or matrix input."""


class NoSpanningTreeError(GraphError):
    """The digraph has no directed spanning tree, so consensus is impossible."""


class StructuralError(GraphError):
    """A PF block violates the structure implied by a spanning tree."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Digraph:
    """Immutable weighted digraph on ``m`` agents.

    ``weights[i, j]`` is the weight of the link from agent ``j`` to agent ``i``.
    """

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
            raise GraphError(f"weights must be a non-empty square matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise GraphError("weights must be finite")
        if np.any(w < 0):
            i, j = np.argwhere(w < 0)[0]
            raise GraphError(f"negative weight a[{i},{j}] = {w[i, j]}")
        if np.any(np.diag(w) != 0):
            i = int(np.flatnonzero(np.diag(w))[0])
            raise GraphError(f"self-loop at agent {i}")
        object.__setattr__(self, "weights", _readonly(w))

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[tuple[int, int, float]]) -> "Digraph":
        """Build from ``(src, dst, weight)`` triples (0-based indices)."""
        if int(m) != m or m < 1:
            raise GraphError(f"agent count must be a positive integer, got {m!r}")
        m = int(m)
        w = np.zeros((m, m))
        for src, dst, weight in edges:
            for idx in (src, dst):
                if int(idx) != idx or not 0 <= idx < m:
                    raise GraphError(f"agent index {idx!r} out of range for m={m}")
            src, dst = int(src), int(dst)
            if src == dst:
                raise GraphError(f"self-loop at agent {src}")
            if not weight > 0:
                raise GraphError(f"edge {src}->{dst} has nonpositive weight {weight!r}")
            if w[dst, src] != 0:
                raise GraphError(f"duplicate edge {src}->{dst}")
            w[dst, src] = float(weight)
        return cls(w)

    @classmethod
    def from_matrix(cls, matrix, kind: str = "auto") -> "Digraph":
        """Recover the digraph from a Laplacian-type matrix.

        ``kind`` is ``"laplacian"`` (``L = D - A``, nonnegative diagonal),
        ``"system_matrix"`` (``-L``, nonpositive diagonal) or ``"auto"``, which
        decides by the sign of the diagonal. A tag that contradicts the
        diagonal sign is an error, as are nonzero row sums.
        """
        mat = np.asarray(matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] == 0:
            raise GraphError(f"matrix must be non-empty and square, got shape {mat.shape}")
        diag = np.diag(mat)
        if np.any(diag > 0) and np.any(diag < 0):
            raise GraphError("diagonal has mixed signs; cannot be a Laplacian or its negative")
        detected = "system_matrix" if np.any(diag < 0) else "laplacian"
        if kind == "auto":
            kind = detected
        elif kind not in ("laplacian", "system_matrix"):
            raise GraphError(f"unknown matrix kind {kind!r}")
        elif kind != detected and np.any(diag != 0):
            raise GraphError(f"matrix tagged {kind!r} but its diagonal sign indicates {detected!r}")
        lap = -mat if kind == "system_matrix" else mat
        check_laplacian(lap)
        return cls(np.where(np.eye(lap.shape[0], dtype=bool), 0.0, -lap))

    def in_neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.weights[i])

    def out_neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.weights[:, i])

    def in_degree(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def out_degree(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def edges(self) -> list[tuple[int, int, float]]:
        """``(src, dst, weight)`` triples in row-major order of ``dst``."""
        return [(int(j), int(i), float(self.weights[i, j])) for i, j in np.argwhere(self.weights > 0)]


def check_laplacian(lap, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Validate ``L = D - A`` structure; returns the matrix as a float array."""
    lap = np.asarray(lap, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise GraphError(f"Laplacian must be square, got shape {lap.shape}")
    sums = lap.sum(axis=1)
    scale = np.maximum(1.0, np.abs(lap).sum(axis=1))
    bad = np.flatnonzero(np.abs(sums) > tol * scale)
    if bad.size:
        r = int(bad[0])
        raise GraphError(f"row {r + 1} sums to {sums[r]:.6g}, expected 0")
    off = lap[~np.eye(lap.shape[0], dtype=bool)]
    if np.any(off > 0):
        raise GraphError("Laplacian has a positive off-diagonal entry")
    return lap


def laplacian(g: Digraph) -> np.ndarray:
    """``L = diag(A 1) - A``; returned read-only."""
    a = g.weights
    return _readonly(np.diag(a.sum(axis=1)) - a)


def laplacian_digraph(lap) -> Digraph:
    return Digraph.from_matrix(lap, kind="laplacian")


def _tarjan(successors: Sequence[Sequence[int]]) -> list[list[int]]:
    """Iterative Tarjan. Components come out in reverse topological order."""
    n = len(successors)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    sccs: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            succ = successors[v]
            while pos < len(succ):
                w = succ[pos]
                pos += 1
                if index[w] == -1:
                    work.append((v, pos))
                    work.append((w, 0))
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            else:
                if low[v] == index[v]:
                    comp = []
                    while True:
                        w = stack.pop()
                        on_stack[w] = False
                        comp.append(w)
                        if w == v:
                            break
                    sccs.append(sorted(comp))
                if work:
                    parent = work[-1][0]
                    low[parent] = min(low[parent], low[v])
    return sccs


def scc_decompose(g: Digraph) -> list[list[int]]:
    """Strongly connected components in PF order.

    Component ``k`` only listens to components ``q >= k``, so permuting ``L``
    by the concatenated list gives an upper block triangular matrix, and a
    closed component (one receiving nothing from outside) comes last.
    Incomparable components are ordered by their smallest agent index;
    agents inside a component keep their input order.
    """
    m = g.m
    listens = [list(g.in_neighbors(i)) for i in range(m)]
    comps = _tarjan(listens)
    comp_of = np.empty(m, dtype=int)
    for c, members in enumerate(comps):
        comp_of[members] = c
    # c -> d whenever some agent of c listens to some agent of d
    succ: list[set[int]] = [set() for _ in comps]
    indeg = [0] * len(comps)
    for i in range(m):
        for j in listens[i]:
            c, d = comp_of[i], comp_of[j]
            if c != d and d not in succ[c]:
                succ[c].add(d)
                indeg[d] += 1
    ready = [(comps[c][0], c) for c in range(len(comps)) if indeg[c] == 0]
    heapq.heapify(ready)
    order: list[list[int]] = []
    while ready:
        _, c = heapq.heappop(ready)
        order.append(comps[c])
        for d in succ[c]:
            indeg[d] -= 1
            if indeg[d] == 0:
                heapq.heappush(ready, (comps[d][0], d))
    return order


def closed_components(g: Digraph) -> list[list[int]]:
    """Components that receive no information from outside themselves."""
    out = []
    for comp in scc_decompose(g):
        members = set(comp)
        if all(set(g.in_neighbors(i).tolist()) <= members for i in comp):
            out.append(comp)
    return out


def has_spanning_tree(g: Digraph) -> bool:
    """True iff some agent reaches every other agent along directed links."""
    m = g.m
    talks_to = [g.out_neighbors(j) for j in range(m)]
    for root in range(m):
        seen = np.zeros(m, dtype=bool)
        seen[root] = True
        frontier = [root]
        while frontier:
            v = frontier.pop()
            for w in talks_to[v]:
                if not seen[w]:
                    seen[w] = True
                    frontier.append(int(w))
        if seen.all():
            return True
    return False


@dataclass(frozen=True, eq=False)
class PfForm:
    """Permuted Laplacian ``L[perm][:, perm]`` in upper block triangular form."""

    permutation: np.ndarray
    components: tuple[tuple[int, ...], ...]
    matrix: np.ndarray
    block_sizes: tuple[int, ...] = field(init=False)
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        sizes = tuple(len(c) for c in self.components)
        object.__setattr__(self, "block_sizes", sizes)
        object.__setattr__(self, "offsets", tuple(int(v) for v in np.concatenate([[0], np.cumsum(sizes)])))

    @property
    def K(self) -> int:
        return len(self.components)

    def block_slice(self, k: int) -> slice:
        return slice(self.offsets[k], self.offsets[k + 1])

    def block(self, k: int, q: int) -> np.ndarray:
        """``L^{k,q}`` (0-based block indices)."""
        return self.matrix[self.block_slice(k), self.block_slice(q)]

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.permutation, np.arange(len(self.permutation))))

    def auxiliary(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """``(L~^{k,k}, D^k)`` for a non-root block ``k < K-1``."""
        if not 0 <= k < self.K - 1:
            raise StructuralError(f"block {k} is the root or out of range (K={self.K})")
        return auxiliary_split(self.block(k, k))


def pf_normal_form(lap) -> PfForm:
    """Perron-Frobenius normal form of a Laplacian whose digraph has a spanning tree."""
    lap = check_laplacian(lap)
    g = laplacian_digraph(lap)
    if not has_spanning_tree(g):
        raise NoSpanningTreeError("digraph has no spanning tree; no PF form with a single root block")
    comps = scc_decompose(g)
    perm = np.array([i for c in comps for i in c], dtype=int)
    mat = _readonly(lap[np.ix_(perm, perm)])
    perm.setflags(write=False)
    return PfForm(perm, tuple(tuple(c) for c in comps), mat)


def auxiliary_split(block) -> tuple[np.ndarray, np.ndarray]:
    """Split a non-root diagonal block into a zero-row-sum part and a diagonal.

    ``L~`` keeps the off-diagonal entries and sets each diagonal entry to minus
    the sum of its row's off-diagonal entries; ``D = block - L~`` collects the
    weight each agent receives from later components.
    """
    block = np.asarray(block, dtype=float)
    n = block.shape[0]
    off = block * (1.0 - np.eye(n))
    tilde = off - np.diag(off.sum(axis=1))
    d = np.diag(np.diag(block) - np.diag(tilde))
    if np.any(np.diag(d) < -ROW_SUM_TOL * max(1.0, float(np.abs(block).max()))):
        raise StructuralError("block receives negative weight from later components")
    d = np.maximum(d, 0.0)
    if not np.any(np.diag(d) > 0):
        raise StructuralError("non-root block has no incoming links from later components")
    return tilde, d


# -- random graphs for tests and batch runs ---------------------------------

def random_strongly_connected(m: int, rng: np.random.Generator, density: float = 0.3,
                              weight_range: tuple[float, float] = (0.5, 2.0)) -> Digraph:
    """Random cycle through all agents plus independent extra links."""
    w = np.zeros((m, m))
    lo, hi = weight_range
    if m > 1:
        order = rng.permutation(m)
        for a, b in zip(order, np.roll(order, -1)):
            w[b, a] = rng.uniform(lo, hi)
        extra = (rng.random((m, m)) < density) & (w == 0) & ~np.eye(m, dtype=bool)
        w[extra] = rng.uniform(lo, hi, size=int(extra.sum()))
    return Digraph(w)


def random_digraph(m: int, rng: np.random.Generator, density: float = 0.3,
                   weight_range: tuple[float, float] = (0.5, 2.0)) -> Digraph:
    mask = (rng.random((m, m)) < density) & ~np.eye(m, dtype=bool)
    w = np.zeros((m, m))
    w[mask] = rng.uniform(*weight_range, size=int(mask.sum()))
    return Digraph(w)


def random_spanning_tree_reducible(sizes: Sequence[int], rng: np.random.Generator,
                                   density: float = 0.3,
                                   weight_range: tuple[float, float] = (0.5, 2.0),
                                   coupling_range: tuple[float, float] = (1.0, 3.0),
                                   shuffle: bool = False) -> Digraph:
    """Reducible digraph with a spanning tree whose SCCs have the given sizes.

    Block ``k`` listens to at least one agent of block ``k+1``, the last
    block is closed. With ``shuffle`` the agent labels are permuted.
    """
    m = int(sum(sizes))
    w = np.zeros((m, m))
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    for k, n in enumerate(sizes):
        sl = slice(offs[k], offs[k + 1])
        w[sl, sl] = random_strongly_connected(int(n), rng, density, weight_range).weights
    for k in range(len(sizes) - 1):
        i = rng.integers(offs[k], offs[k + 1])
        j = rng.integers(offs[k + 1], offs[k + 2])
        w[i, j] = rng.uniform(*coupling_range)
        later = np.arange(offs[k + 1], m)
        for i in range(offs[k], offs[k + 1]):
            for j in later:
                if w[i, j] == 0 and rng.random() < density / 2:
                    w[i, j] = rng.uniform(*coupling_range)
    if shuffle:
        p = rng.permutation(m)
        w = w[np.ix_(p, p)]
    return Digraph(w)

"""Rooted trees with edge lengths, vertex measures, and discretization.

A tree is stored as a parent map plus positive edge lengths; every vertex id
is an integer in ``range(n)`` and the root is its own parent.  Heights
(distance to the root) and depths are derived once at construction, and all
metric queries go through lowest-common-ancestor arithmetic:

    d(x, y) = height[x] + height[y] - 2 * height[lca(x, y)]

The module also provides the measure-side toolkit used throughout the
package: per-vertex mass vectors (:class:`SpeedMeasure`), the edge-length
measure, lower mass bounds over balls, degree counts at a scale, restriction
to a ball around the root, branch closures, nets, and the root-ward
projection onto a subset together with its mass pushforward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

GEOM_TOL = 1e-9
FLOAT_SLACK = 1e-12


class TreeError(ValueError):
    """Structurally invalid tree or malformed geometric query."""


class MeasureError(ValueError):
    """Invalid mass assignment."""


def _as_int(v, what="vertex"):
    iv = int(v)
    if iv != v:
        raise TreeError(f"{what} must be an integer, got {v!r}")
    return iv


class RootedMetricTree:
    """Finite rooted tree with strictly positive edge lengths.

    Instances are built through :func:`build_tree` (or the generator
    helpers), which validates the structure.  Arrays are frozen after
    construction.
    """

    def __init__(self, parent: np.ndarray, edge_length: np.ndarray, root: int):
        self.parent = parent
        self.edge_length = edge_length
        self.root = root
        self.n = parent.shape[0]
        self.depth = np.zeros(self.n, dtype=np.int64)
        self.height = np.zeros(self.n, dtype=np.float64)
        self._fill_depth_height()
        self._children: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * self.n
        self._fill_children()
        self._lift: Optional[np.ndarray] = None
        self._euler: Optional[tuple] = None
        for arr in (self.parent, self.edge_length, self.depth, self.height):
            arr.setflags(write=False)

    # -- construction internals ------------------------------------------

    def _fill_depth_height(self):
        known = np.zeros(self.n, dtype=bool)
        known[self.root] = True
        for v in range(self.n):
            chain = []
            u = v
            while not known[u]:
                chain.append(u)
                u = int(self.parent[u])
                if len(chain) > self.n:
                    raise TreeError("parent pointers contain a cycle")
            for w in reversed(chain):
                p = int(self.parent[w])
                self.depth[w] = self.depth[p] + 1
                self.height[w] = self.height[p] + self.edge_length[w]
                known[w] = True

    def _fill_children(self):
        kids: list[list[int]] = [[] for _ in range(self.n)]
        for v in range(self.n):
            if v != self.root:
                kids[int(self.parent[v])].append(v)
        self._children = [np.array(c, dtype=np.int64) for c in kids]

    def _ensure_lift(self):
        if self._lift is not None:
            return
        levels = max(1, int(np.ceil(np.log2(max(2, int(self.depth.max()) + 1)))))
        lift = np.empty((levels, self.n), dtype=np.int64)
        lift[0] = self.parent
        for k in range(1, levels):
            lift[k] = lift[k - 1][lift[k - 1]]
        self._lift = lift

    def _ensure_euler(self):
        # Euler tour + sparse minimum table: whole-array meets in a few gathers
        if self._euler is not None:
            return
        euler = np.empty(2 * self.n - 1, dtype=np.int64)
        first = np.empty(self.n, dtype=np.int64)
        pos = 0
        euler[pos] = self.root
        first[self.root] = 0
        pos += 1
        stack = [(self.root, 0)]
        while stack:
            v, ci = stack[-1]
            kids = self._children[v]
            if ci < len(kids):
                stack[-1] = (v, ci + 1)
                c = int(kids[ci])
                first[c] = pos
                euler[pos] = c
                pos += 1
                stack.append((c, 0))
            else:
                stack.pop()
                if stack:
                    euler[pos] = stack[-1][0]
                    pos += 1
        edepth = self.depth[euler]
        m = len(euler)
        levels = max(1, m.bit_length())
        table = np.empty((levels, m), dtype=np.int64)
        table[0] = np.arange(m)
        for k in range(1, levels):
            half = 1 << (k - 1)
            table[k] = table[k - 1]
            span = m - (1 << k) + 1
            if span > 0:
                left = table[k - 1][:span]
                right = table[k - 1][half:half + span]
                table[k][:span] = np.where(edepth[left] <= edepth[right],
                                           left, right)
        self._euler = (euler, first, edepth, table)

    def _lca_heights_from(self, x: int) -> np.ndarray:
        """height(lca(x, v)) for every v, vectorized over the whole tree."""
        self._ensure_euler()
        euler, first, edepth, table = self._euler
        fx = first[int(x)]
        lo = np.minimum(fx, first)
        hi = np.maximum(fx, first)
        span = hi - lo + 1
        k = np.frexp(span.astype(np.float64))[1] - 1
        pow2 = np.left_shift(1, k)
        a = table[k, lo]
        b = table[k, hi - pow2 + 1]
        best = np.where(edepth[a] <= edepth[b], a, b)
        return self.height[euler[best]]

    # -- basic queries ----------------------------------------------------

    def vertices(self) -> range:
        return range(self.n)

    def children(self, v: int) -> np.ndarray:
        return self._children[v]

    def neighbors(self, v: int) -> np.ndarray:
        if v == self.root:
            return self._children[v]
        return np.concatenate(([int(self.parent[v])], self._children[v]))

    def edges(self):
        """Yield (child, parent, length) for every edge."""
        for v in range(self.n):
            if v != self.root:
                yield v, int(self.parent[v]), float(self.edge_length[v])

    def lca(self, x: int, y: int) -> int:
        self._ensure_lift()
        lift = self._lift
        dx, dy = int(self.depth[x]), int(self.depth[y])
        if dx < dy:
            x, y = y, x
            dx, dy = dy, dx
        diff = dx - dy
        k = 0
        while diff:
            if diff & 1:
                x = int(lift[k][x])
            diff >>= 1
            k += 1
        if x == y:
            return x
        for k in range(lift.shape[0] - 1, -1, -1):
            if lift[k][x] != lift[k][y]:
                x = int(lift[k][x])
                y = int(lift[k][y])
        return int(self.parent[x])

    def distance(self, x: int, y: int) -> float:
        if x == y:
            return 0.0
        a = self.lca(x, y)
        return float(self.height[x] + self.height[y] - 2.0 * self.height[a])

    def branch_point(self, x: int, y: int, z: int) -> int:
        """Median vertex of x, y, z: the unique point on all three segments."""
        a, b, c = self.lca(x, y), self.lca(y, z), self.lca(x, z)
        # two of the three pairwise meets coincide; the deepest one is the median
        best = a
        for cand in (b, c):
            if self.depth[cand] > self.depth[best]:
                best = cand
        return best

    def on_segment(self, u: int, x: int, y: int, tol: float = GEOM_TOL) -> bool:
        return abs(self.distance(x, u) + self.distance(u, y) - self.distance(x, y)) <= tol

    def ancestors(self, v: int) -> list[int]:
        """Vertices on the root segment of v, from v up to the root inclusive."""
        out = [v]
        while v != self.root:
            v = int(self.parent[v])
            out.append(v)
        return out

    def distances_from(self, x: int) -> np.ndarray:
        """Distance from x to every vertex."""
        return self.height[x] + self.height - 2.0 * self._lca_heights_from(x)

    def distance_matrix(self, limit: int = 2000) -> np.ndarray:
        if self.n > limit:
            raise TreeError(f"distance matrix capped at {limit} vertices, tree has {self.n}")
        d = np.zeros((self.n, self.n), dtype=np.float64)
        for v in range(self.n):
            d[v] = self.distances_from(v)
        return d

    def diameter(self) -> float:
        """Exact diameter via a double farthest-point sweep."""
        if self.n == 1:
            return 0.0
        a = int(np.argmax(self.height))
        da = self.distances_from(a)
        return float(da.max())

    def __repr__(self):
        return f"RootedMetricTree(n={self.n}, root={self.root})"


def build_tree(parents, edge_lengths, root: int) -> RootedMetricTree:
    """Validate and build a rooted tree.

    ``parents`` maps every non-root vertex to its parent (the root may be
    included mapping to itself); ``edge_lengths`` maps every non-root vertex
    to the strictly positive length of the edge toward its parent.  Vertex
    ids must be exactly 0..n-1.
    """
    root = _as_int(root, "root")
    if isinstance(parents, Mapping):
        keys = {_as_int(k) for k in parents}
        keys.add(root)
        n = max(keys) + 1 if keys else 0
        if keys != set(range(n)):
            missing = sorted(set(range(n)) - keys)
            raise TreeError(f"vertex ids must be contiguous from 0; missing {missing}")
        parr = np.empty(n, dtype=np.int64)
        parr[root] = root
        for k, p in parents.items():
            k = _as_int(k)
            if k == root:
                if _as_int(p) != root:
                    raise TreeError("root must be its own parent")
                continue
            parr[k] = _as_int(p, "parent")
    else:
        parr = np.asarray(parents, dtype=np.int64).copy()
        n = parr.shape[0]
        parr[root] = root
    if n == 0:
        raise TreeError("empty tree")
    if not (0 <= root < n):
        raise TreeError(f"root {root} outside vertex range 0..{n - 1}")
    if ((parr < 0) | (parr >= n)).any():
        raise TreeError("dangling vertex: parent id outside vertex range")

    if isinstance(edge_lengths, Mapping):
        earr = np.zeros(n, dtype=np.float64)
        seen = set()
        for k, ell in edge_lengths.items():
            k = _as_int(k)
            if not (0 <= k < n):
                raise TreeError(f"dangling vertex {k} in edge lengths")
            earr[k] = float(ell)
            seen.add(k)
        missing = set(range(n)) - seen - {root}
        if missing:
            raise TreeError(f"missing edge length for vertices {sorted(missing)}")
    else:
        earr = np.asarray(edge_lengths, dtype=np.float64).copy()
        if earr.shape[0] != n:
            raise TreeError("edge length array does not match vertex count")
    earr[root] = 0.0
    bad = [v for v in range(n) if v != root and not (earr[v] > 0.0 and math.isfinite(earr[v]))]
    if bad:
        raise TreeError(f"edge lengths must be strictly positive and finite; bad at {bad}")
    tree = RootedMetricTree(parr, earr, root)  # cycle check happens here
    return tree


# -- measures --------------------------------------------------------------


class SpeedMeasure:
    """Nonnegative finite mass per vertex, aligned with a tree's vertex ids.

    Strict positivity is not required here (the edge-length measure of a
    one-vertex tree is the zero measure); operations that need at least two
    positive atoms, such as chain construction, enforce it themselves.
    """

    def __init__(self, masses):
        m = np.asarray(masses, dtype=np.float64).copy()
        if m.ndim != 1:
            raise MeasureError("masses must be a flat vector")
        if not np.all(np.isfinite(m)):
            raise MeasureError("masses must be finite")
        if (m < 0).any():
            raise MeasureError("masses must be nonnegative")
        m.setflags(write=False)
        self.masses = m

    @classmethod
    def from_dict(cls, n: int, mapping: Mapping[int, float]) -> "SpeedMeasure":
        m = np.zeros(n, dtype=np.float64)
        for k, v in mapping.items():
            m[_as_int(k)] = float(v)
        return cls(m)

    def __len__(self):
        return self.masses.shape[0]

    def __getitem__(self, v: int) -> float:
        return float(self.masses[v])

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def positive_vertices(self) -> np.ndarray:
        return np.nonzero(self.masses > 0)[0]

    def ball_mass(self, tree: RootedMetricTree, x: int, radius: float,
                  closed: bool = True) -> float:
        d = tree.distances_from(x)
        if closed:
            sel = d <= radius + FLOAT_SLACK
        else:
            sel = d < radius - FLOAT_SLACK
        return float(self.masses[sel].sum())

    def __repr__(self):
        return f"SpeedMeasure(n={len(self)}, total={self.total:.6g})"


def length_measure(tree: RootedMetricTree) -> SpeedMeasure:
    """Measure giving each non-root vertex the length of its parent edge.

    Cumulative masses then telescope: the total mass on the vertices of the
    half-open root segment (root, a] equals d(root, a).
    """
    return SpeedMeasure(tree.edge_length)


@dataclass(frozen=True)
class MassBoundReport:
    delta: float
    radius: Optional[float]
    value: float  # +inf marks an empty center range


def lower_mass(tree: RootedMetricTree, measure: SpeedMeasure, delta: float,
               radius: Optional[float] = None) -> MassBoundReport:
    """Infimum over centers of the measure of the closed delta-ball.

    With ``radius`` given, centers range over the open ball around the root;
    an empty center range reports +inf.
    """
    if delta < 0:
        raise TreeError("delta must be nonnegative")
    if radius is None:
        centers = range(tree.n)
    else:
        centers = [v for v in range(tree.n) if tree.height[v] < radius - FLOAT_SLACK]
    best = math.inf
    for x in centers:
        val = measure.ball_mass(tree, x, delta, closed=True)
        if val < best:
            best = val
    return MassBoundReport(delta=float(delta), radius=radius, value=best)


def epsilon_degree(tree: RootedMetricTree, x: int, eps: float) -> int:
    """Count of gateway vertices just outside the open eps-ball around x.

    A vertex v outside B(x, eps) counts when some neighbor u of v lies in
    B(x, eps) and v lies on the segment from u to some vertex outside
    B(x, 2*eps).
    """
    if eps <= 0:
        raise TreeError("eps must be positive")
    d = tree.distances_from(x)
    in_ball = d < eps - FLOAT_SLACK
    outside2 = np.nonzero(d >= 2 * eps - FLOAT_SLACK)[0]
    count = 0
    for v in range(tree.n):
        if in_ball[v]:
            continue
        hit = False
        for u in tree.neighbors(v):
            if not in_ball[u]:
                continue
            duv = tree.distance(int(u), v)
            for w in outside2:
                if abs(duv + tree.distance(v, int(w)) - tree.distance(int(u), int(w))) <= GEOM_TOL:
                    hit = True
                    break
            if hit:
                break
        if hit:
            count += 1
    return count


def max_epsilon_degree(tree: RootedMetricTree, eps: float) -> int:
    return max(epsilon_degree(tree, x, eps) for x in range(tree.n))


# -- four point condition ---------------------------------------------------


@dataclass(frozen=True)
class FourPointReport:
    ok: bool
    checked: int
    exhaustive: bool
    quadruple: Optional[tuple[int, int, int, int]] = None
    sums: Optional[tuple[float, float, float]] = None


def check_four_point(obj, exhaustive_limit: int = 30, samples: int = 100_000,
                     seed: int = 0, tol: float = GEOM_TOL) -> FourPointReport:
    """Check the tree metric quadruple inequality on a tree or a matrix.

    For every quadruple the largest of the three pairings
    d12+d34, d13+d24, d14+d23 must be attained (up to ``tol``) at least
    twice.  Exhaustive up to ``exhaustive_limit`` points, seeded sampling of
    ``samples`` quadruples beyond that.  The first violating quadruple is
    reported with its three pairing sums.
    """
    if isinstance(obj, RootedMetricTree):
        n = obj.n
        dist = obj.distance_matrix() if n <= max(exhaustive_limit, 2000) else None
        getter = (lambda i, j: dist[i, j]) if dist is not None else obj.distance
    else:
        mat = np.asarray(obj, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise TreeError("distance matrix must be square")
        n = mat.shape[0]
        getter = lambda i, j: mat[i, j]

    def bad(q):
        i, j, k, l = q
        s = sorted((getter(i, j) + getter(k, l),
                    getter(i, k) + getter(j, l),
                    getter(i, l) + getter(j, k)))
        if s[2] - s[1] > tol:
            return (s[0], s[1], s[2])
        return None

    checked = 0
    if n <= exhaustive_limit:
        from itertools import combinations

        for q in combinations(range(n), 4):
            checked += 1
            v = bad(q)
            if v:
                return FourPointReport(False, checked, True, q, v)
        return FourPointReport(True, checked, True)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        q = tuple(int(a) for a in rng.choice(n, size=4, replace=False))
        checked += 1
        v = bad(q)
        if v:
            return FourPointReport(False, checked, False, q, v)
    return FourPointReport(True, checked, False)


# -- restriction, closure, nets, projection ---------------------------------


@dataclass(frozen=True)
class Restriction:
    tree: RootedMetricTree
    measure: SpeedMeasure
    old_ids: np.ndarray  # old_ids[new] = ambient vertex id

    def __iter__(self):  # allow tree, measure, old = restrict(...)
        return iter((self.tree, self.measure, self.old_ids))


def restrict(tree: RootedMetricTree, measure: SpeedMeasure,
             radius: float) -> Restriction:
    """Induced subtree and measure on the closed ball around the root."""
    if radius < 0:
        raise TreeError("radius must be nonnegative")
    keep = np.nonzero(tree.height <= radius + FLOAT_SLACK)[0]
    new_of = {int(v): i for i, v in enumerate(keep)}
    parents = {}
    lengths = {}
    for i, v in enumerate(keep):
        v = int(v)
        if v == tree.root:
            continue
        p = int(tree.parent[v])
        # heights grow along root segments, so parents of kept vertices are kept
        parents[i] = new_of[p]
        lengths[i] = float(tree.edge_length[v])
    sub = build_tree(parents, lengths, new_of[tree.root])
    sub_m = SpeedMeasure(measure.masses[keep])
    return Restriction(sub, sub_m, keep.astype(np.int64))


def branch_closure(tree: RootedMetricTree, subset: Iterable[int]) -> np.ndarray:
    """Close a root-containing vertex set under branch points of its triples.

    With the root present, the median of any triple is one of the pairwise
    meets, and meets of added points are again meets of original points, so
    one pass over pairs yields the idempotent closure.
    """
    s = {int(v) for v in subset}
    if tree.root not in s:
        raise TreeError("subset must contain the root")
    base = sorted(s)
    for i, a in enumerate(base):
        for b in base[i + 1:]:
            s.add(tree.lca(a, b))
    return np.array(sorted(s), dtype=np.int64)


def spanned_subtree(tree: RootedMetricTree, subset: Iterable[int]):
    """Tree induced on a branch-closed, root-containing subset.

    Each subset vertex's parent is its deepest proper subset ancestor; edge
    lengths are height gaps, so subtree distances agree with ambient ones.
    Returns (subtree, old_ids).
    """
    s_arr = np.array(sorted({int(v) for v in subset}), dtype=np.int64)
    s_set = set(int(v) for v in s_arr)
    if tree.root not in s_set:
        raise TreeError("subset must contain the root")
    closed = branch_closure(tree, s_arr)
    if len(closed) != len(s_arr):
        raise TreeError("subset is not branch closed")
    new_of = {int(v): i for i, v in enumerate(s_arr)}
    parents = {}
    lengths = {}
    for v in s_arr:
        v = int(v)
        if v == tree.root:
            continue
        u = int(tree.parent[v])
        while u not in s_set:
            u = int(tree.parent[u])
        parents[new_of[v]] = new_of[u]
        lengths[new_of[v]] = float(tree.height[v] - tree.height[u])
    sub = build_tree(parents, lengths, new_of[tree.root])
    return sub, s_arr


def epsilon_net(tree: RootedMetricTree, eps: float,
                radius: Optional[float] = None) -> np.ndarray:
    """Greedy farthest-point eps-net of the closed root ball, rooted.

    Starts from the root and repeatedly adds the farthest uncovered vertex
    (lowest id on ties) until every candidate is within eps of the net.
    """
    if eps <= 0:
        raise TreeError("eps must be positive")
    if radius is None:
        cand = np.arange(tree.n)
    else:
        cand = np.nonzero(tree.height <= radius + FLOAT_SLACK)[0]
    dist = np.array([tree.distance(tree.root, int(v)) for v in cand])
    net = [tree.root]
    while True:
        far = int(np.argmax(dist))
        if dist[far] <= eps + FLOAT_SLACK:
            break
        v = int(cand[far])
        net.append(v)
        dv = np.array([tree.distance(v, int(u)) for u in cand])
        dist = np.minimum(dist, dv)
    return np.array(sorted(set(net)), dtype=np.int64)


@dataclass(frozen=True)
class Projection:
    psi: np.ndarray            # psi[x] = deepest subset vertex on the root segment of x
    pushforward: SpeedMeasure  # masses moved onto the subset, ambient ids
    branch_closed: bool
    max_displacement: float


def project_psi(tree: RootedMetricTree, measure: SpeedMeasure,
                subset: Iterable[int]) -> Projection:
    """Root-ward projection onto a subset and the measure pushforward."""
    s = {int(v) for v in subset}
    if tree.root not in s:
        raise TreeError("subset must contain the root")
    psi = np.empty(tree.n, dtype=np.int64)
    for v in range(tree.n):
        u = v
        while u not in s:
            u = int(tree.parent[u])
        psi[v] = u
    pushed = np.zeros(tree.n, dtype=np.float64)
    np.add.at(pushed, psi, measure.masses)
    closed = len(branch_closure(tree, s)) == len(s)
    disp = max(tree.distance(v, int(psi[v])) for v in range(tree.n))
    return Projection(psi=psi, pushforward=SpeedMeasure(pushed),
                      branch_closed=closed, max_displacement=float(disp))


@dataclass(frozen=True)
class Discretization:
    subset: np.ndarray
    psi: np.ndarray
    pushforward: SpeedMeasure
    max_displacement: float


def discretize(tree: RootedMetricTree, measure: SpeedMeasure, eps: float,
               radius: Optional[float] = None) -> Discretization:
    """Branch-closed eps-net whose root-ward projection moves mass at most eps.

    Density of a net bounds the distance to the nearest net point but not to
    the nearest net point on the way to the root (worst case twice eps), so
    after closing the greedy net this augments it, per violating vertex, with
    the farthest ancestor within eps, re-closing until the projection
    displacement is within eps.  The pushforward then sits within Prohorov
    distance eps of the measure by the obvious coupling.
    """
    subset = set(int(v) for v in branch_closure(tree, epsilon_net(tree, eps, radius)))
    if radius is None:
        scope = list(range(tree.n))
    else:
        scope = [v for v in range(tree.n) if tree.height[v] <= radius + FLOAT_SLACK]
    for _ in range(tree.n + 1):
        psi = {}
        additions = set()
        for v in scope:
            u = v
            while u not in subset:
                u = int(tree.parent[u])
            if tree.height[v] - tree.height[u] > eps + FLOAT_SLACK:
                a = v
                w = v
                while w != tree.root:
                    w = int(tree.parent[w])
                    if tree.height[v] - tree.height[w] > eps + FLOAT_SLACK:
                        break
                    a = w
                additions.add(a)
        if not additions:
            break
        subset |= set(int(x) for x in branch_closure(tree, subset | additions))
    sub_arr = np.array(sorted(subset), dtype=np.int64)
    proj = project_psi(tree, measure, sub_arr)
    return Discretization(subset=sub_arr, psi=proj.psi,
                          pushforward=proj.pushforward,
                          max_displacement=proj.max_displacement)


# -- interchange format ------------------------------------------------------


def save_tree(path, tree: RootedMetricTree, measure: Optional[SpeedMeasure] = None):
    """Write the plain-text interchange format.

    Header ``tree v1 <n> <root>``; one ``<vertex> <parent> <length>`` line
    per non-root vertex; optional ``mass <vertex> <value>`` lines.  Floats
    carry 17 significant digits so round-trips are exact.
    """
    lines = [f"tree v1 {tree.n} {tree.root}"]
    for v in range(tree.n):
        if v == tree.root:
            continue
        lines.append(f"{v} {int(tree.parent[v])} {float(tree.edge_length[v]):.17g}")
    if measure is not None:
        if len(measure) != tree.n:
            raise MeasureError("measure size does not match tree")
        for v in range(tree.n):
            lines.append(f"mass {v} {float(measure.masses[v]):.17g}")
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(text)


def load_tree(path):
    """Parse the interchange format; returns (tree, measure or None)."""
    with open(path, "r", encoding="ascii") as fh:
        raw = fh.read().splitlines()
    lines = [ln.strip() for ln in raw if ln.strip()]
    if not lines:
        raise TreeError("empty tree file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "tree" or head[1] != "v1":
        raise TreeError(f"bad header: {lines[0]!r}")
    n, root = int(head[2]), int(head[3])
    parents: dict[int, int] = {}
    lengths: dict[int, float] = {}
    masses: dict[int, float] = {}
    saw_mass = False
    for idx, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if parts[0] == "mass":
            if len(parts) != 3:
                raise TreeError(f"line {idx}: bad mass line {ln!r}")
            saw_mass = True
            masses[int(parts[1])] = float(parts[2])
            continue
        if len(parts) != 3:
            raise TreeError(f"line {idx}: bad edge line {ln!r}")
        v = int(parts[0])
        parents[v] = int(parts[1])
        lengths[v] = float(parts[2])
    if set(parents) != set(range(n)) - {root}:
        raise TreeError("edge lines do not cover exactly the non-root vertices")
    tree = build_tree(parents, lengths, root)
    if not saw_mass:
        return tree, None
    return tree, SpeedMeasure.from_dict(n, masses)

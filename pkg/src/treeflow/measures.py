"""Distances between finite atomic measures and convergence reports.

Two notions of distance drive all comparisons:

* Prohorov: the least eps such that each measure fits inside the other's
  eps-enlargement with eps mass to spare, both ways.  Computed exactly by a
  short sequence of max-flow feasibility checks (a coupling of mass
  max(total) - eps supported on pairs within eps exists iff the flow value
  reaches it), scanning the windows between consecutive pairwise distances.
* Bounded-Lipschitz dual (Kantorovich-Rubinstein style): sup of the signed
  integral over functions with |f| <= 1 that contract distances, computed
  as a linear program.  Finite for measures of different totals, which is
  what restriction to growing balls produces.

Both have tiny brute-force twins used only as test oracles.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .tree import (
    FLOAT_SLACK,
    GEOM_TOL,
    MeasureError,
    RootedMetricTree,
    SpeedMeasure,
    lower_mass,
)


@dataclass(frozen=True)
class FiniteAtomMeasure:
    """Finite positive measure on hashable points; zero-weight atoms dropped."""

    points: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.points) != len(self.weights):
            raise MeasureError("points and weights must align")
        if len(set(self.points)) != len(self.points):
            raise MeasureError("duplicate atoms; merge them first")
        for w in self.weights:
            if not (w > 0 and math.isfinite(w)):
                raise MeasureError(f"atom weights must be positive and finite, got {w}")

    @classmethod
    def from_dict(cls, mapping: Mapping) -> "FiniteAtomMeasure":
        pts, ws = [], []
        for p, w in mapping.items():
            w = float(w)
            if w < 0 or not math.isfinite(w):
                raise MeasureError(f"atom weights must be nonnegative, got {w}")
            if w > 0:
                pts.append(p)
                ws.append(w)
        return cls(tuple(pts), tuple(ws))

    @classmethod
    def from_samples(cls, samples, total: float = 1.0) -> "FiniteAtomMeasure":
        samples = list(samples)
        if not samples:
            raise MeasureError("need at least one sample")
        counts = Counter(samples)
        scale = total / len(samples)
        return cls(tuple(counts.keys()),
                   tuple(c * scale for c in counts.values()))

    @property
    def total(self) -> float:
        return float(sum(self.weights))

    def __len__(self) -> int:
        return len(self.points)

    def mass(self, point) -> float:
        for p, w in zip(self.points, self.weights):
            if p == point:
                return w
        return 0.0

    def as_dict(self) -> dict:
        return dict(zip(self.points, self.weights))


def empirical_law(samples) -> FiniteAtomMeasure:
    """Probability measure putting 1/n on each sample (ties aggregated)."""
    return FiniteAtomMeasure.from_samples(samples, total=1.0)


def tree_metric(tree: RootedMetricTree) -> Callable[[int, int], float]:
    return lambda u, v: tree.distance(int(u), int(v))


# ------------------------------------------------------------------ Prohorov

def _dinic_flow(na: int, nb: int, src_caps, snk_caps, ii, jj) -> float:
    """Exact float max flow on the three-layer admissibility network."""
    s, t = na + nb, na + nb + 1
    n_nodes = t + 1
    big = float(sum(src_caps)) + 1.0
    to: list[int] = []
    cap: list[float] = []
    adj: list[list[int]] = [[] for _ in range(n_nodes)]

    def add(u, v, c):
        adj[u].append(len(to))
        to.append(v)
        cap.append(c)
        adj[v].append(len(to))
        to.append(u)
        cap.append(0.0)

    for i, w in enumerate(src_caps):
        add(s, i, float(w))
    for j, w in enumerate(snk_caps):
        add(na + j, t, float(w))
    for i, j in zip(ii, jj):
        add(int(i), na + int(j), big)

    tiny = 1e-15 * big
    flow = 0.0
    while True:
        level = [-1] * n_nodes
        level[s] = 0
        queue = [s]
        for u in queue:
            for e in adj[u]:
                v = to[e]
                if cap[e] > tiny and level[v] < 0:
                    level[v] = level[u] + 1
                    queue.append(v)
        if level[t] < 0:
            return flow
        it = [0] * n_nodes

        def push(u, limit):
            if u == t:
                return limit
            while it[u] < len(adj[u]):
                e = adj[u][it[u]]
                v = to[e]
                if cap[e] > tiny and level[v] == level[u] + 1:
                    got = push(v, min(limit, cap[e]))
                    if got > 0.0:
                        cap[e] -= got
                        cap[e ^ 1] += got
                        return got
                it[u] += 1
            return 0.0

        while True:
            pushed = push(s, big)
            if pushed <= 0.0:
                break
            flow += pushed


def _interval_flow(pos_mu, w_mu, pos_nu, w_nu, eps: float) -> float:
    """Max shippable mass when admissibility is |p - q| <= eps on a line.

    Sweep demands in position order and serve each from the active supply
    expiring soonest; the exchange argument makes this greedy exact, and it
    stays O(n log n) where the generic solver would see dense graphs.
    """
    order_mu = np.argsort(pos_mu, kind="stable")
    order_nu = np.argsort(pos_nu, kind="stable")
    supply_pos = np.asarray(pos_mu, dtype=np.float64)[order_mu]
    supply_w = np.asarray(w_mu, dtype=np.float64)[order_mu]
    heap: list = []
    shipped = 0.0
    k = 0
    for j in order_nu:
        q = float(pos_nu[j])
        demand = float(w_nu[j])
        while k < len(supply_pos) and supply_pos[k] <= q + eps:
            heapq.heappush(heap, [supply_pos[k] + eps, supply_w[k]])
            k += 1
        while heap and heap[0][0] < q:
            heapq.heappop(heap)
        while demand > 0.0 and heap:
            take = min(demand, heap[0][1])
            shipped += take
            demand -= take
            heap[0][1] -= take
            if heap[0][1] <= 0.0:
                heapq.heappop(heap)
    return shipped


def prohorov(mu: FiniteAtomMeasure, nu: FiniteAtomMeasure, dist,
             dists: Optional[np.ndarray] = None,
             coords: Optional[tuple] = None) -> float:
    """Prohorov distance, exact up to float slack.

    Between consecutive pairwise distances the admissible pair set is
    constant, so the least feasible eps in a window is
    max(window start, max(total) - flow).  The first window that contains
    its own candidate yields the global minimum.  The predicate is monotone
    in the window index; galloping up from the smallest window keeps every
    probed flow graph about as sparse as the answer's own window, which is
    what makes near-aligned measures with large supports cheap.

    ``dists``, when given, is the precomputed len(mu) x len(nu) distance
    array and ``dist`` is not called.  ``coords``, when given, is a pair of
    arrays placing the atoms of mu and nu on a line so that
    dist(p, q) == |coord(p) - coord(q)|; feasibility then runs through the
    sweep-line greedy instead of the generic flow solver.
    """
    if len(mu) == 0 and len(nu) == 0:
        return 0.0
    top = max(mu.total, nu.total)
    if coords is not None:
        pos_mu = np.asarray(coords[0], dtype=np.float64)
        pos_nu = np.asarray(coords[1], dtype=np.float64)
        if pos_mu.shape != (len(mu),) or pos_nu.shape != (len(nu),):
            raise MeasureError("coords must align with the two supports")
        if dists is None:
            dists = np.abs(pos_mu[:, None] - pos_nu[None, :])
    if dists is None:
        dists = np.array([[dist(p, q) for q in nu.points] for p in mu.points],
                         dtype=np.float64)
    else:
        dists = np.asarray(dists, dtype=np.float64)
        if dists.shape != (len(mu), len(nu)):
            raise MeasureError("dists must be a len(mu) x len(nu) array")
    flat = dists.ravel()
    order = np.argsort(flat, kind="stable")
    dvals = flat[order]
    ii = order // max(len(nu), 1)
    jj = order % max(len(nu), 1)
    cuts = np.unique(np.concatenate(([0.0], flat)))
    mu_w = np.asarray(mu.weights, dtype=np.float64)
    nu_w = np.asarray(nu.weights, dtype=np.float64)
    flows: dict[int, float] = {}

    def flow_at(k: int) -> float:
        if k not in flows:
            eps = cuts[k] + FLOAT_SLACK
            if coords is not None:
                flows[k] = _interval_flow(pos_mu, mu_w, pos_nu, nu_w, eps)
            else:
                m = int(np.searchsorted(dvals, eps, side="right"))
                flows[k] = _dinic_flow(len(mu), len(nu), mu_w, nu_w,
                                       ii[:m], jj[:m])
        return flows[k]

    def candidate(k: int) -> float:
        return max(cuts[k], top - flow_at(k))

    def solvable(k: int) -> bool:
        nxt = cuts[k + 1] if k + 1 < len(cuts) else math.inf
        return candidate(k) < nxt - FLOAT_SLACK or k + 1 == len(cuts)

    last = len(cuts) - 1
    if solvable(0):
        return float(max(candidate(0), 0.0))
    lo, hi = 0, 1                     # lo is known unsolvable
    while hi < last and not solvable(hi):
        lo, hi = hi, min(2 * hi, last)
    a, b = lo + 1, hi                 # first solvable index lies in [a, b]
    while a < b:
        mid = (a + b) // 2
        if solvable(mid):
            b = mid
        else:
            a = mid + 1
    return float(max(candidate(a), 0.0))


def prohorov_bruteforce(mu: FiniteAtomMeasure, nu: FiniteAtomMeasure, dist,
                        iters: int = 80) -> float:
    """Literal definition over all subsets; oracle for small supports only."""
    if len(mu) > 10 or len(nu) > 10:
        raise MeasureError("brute-force check is limited to 10 atoms per side")
    if len(mu) == 0 and len(nu) == 0:
        return 0.0

    def enlarged(points, other, eps):
        return sum(w for q, w in zip(other.points, other.weights)
                   if any(dist(p, q) <= eps + FLOAT_SLACK for p in points))

    def one_sided(a: FiniteAtomMeasure, b: FiniteAtomMeasure, eps: float) -> bool:
        idx = range(len(a))
        for r in range(1, len(a) + 1):
            for sub in itertools.combinations(idx, r):
                pts = [a.points[i] for i in sub]
                massa = sum(a.weights[i] for i in sub)
                if massa > enlarged(pts, b, eps) + eps + FLOAT_SLACK:
                    return False
        return True

    def ok(eps: float) -> bool:
        return one_sided(mu, nu, eps) and one_sided(nu, mu, eps)

    hi = max([mu.total, nu.total]
             + [dist(p, q) for p in mu.points for q in nu.points])
    if ok(0.0):
        return 0.0
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ------------------------------------------------- bounded-Lipschitz duality

def kr_distance(mu: FiniteAtomMeasure, nu: FiniteAtomMeasure, dist,
                path_order: Optional[Sequence] = None) -> float:
    """sup { integral f d(mu - nu) : |f| <= 1, |f(p) - f(q)| <= d(p, q) }.

    ``path_order`` lists the support in order along an isometrically
    embedded path; then only adjacent constraints are imposed, which is
    equivalent when distances add along the order and keeps the program
    linear in the support size.
    """
    support = list(dict.fromkeys(list(mu.points) + list(nu.points)))
    n = len(support)
    if n == 0:
        return 0.0
    pos = {p: i for i, p in enumerate(support)}
    w = np.zeros(n)
    for p, m in zip(mu.points, mu.weights):
        w[pos[p]] += m
    for p, m in zip(nu.points, nu.weights):
        w[pos[p]] -= m
    if n == 1:
        return float(abs(w[0]))

    if path_order is not None:
        order = [p for p in path_order if p in pos]
        if len(order) != n:
            raise MeasureError("path_order must cover the whole support")
        pairs = [(pos[a], pos[b]) for a, b in zip(order, order[1:])]
    else:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    rows_i, rows_j, vals = [], [], []
    rhs = np.empty(2 * len(pairs))
    for k, (i, j) in enumerate(pairs):
        d = dist(support[i], support[j])
        rows_i += [2 * k, 2 * k, 2 * k + 1, 2 * k + 1]
        rows_j += [i, j, i, j]
        vals += [1.0, -1.0, -1.0, 1.0]
        rhs[2 * k] = d
        rhs[2 * k + 1] = d
    a_ub = sp.csr_matrix((vals, (rows_i, rows_j)), shape=(2 * len(pairs), n))
    res = linprog(-w, A_ub=a_ub, b_ub=rhs, bounds=(-1.0, 1.0), method="highs")
    if not res.success:
        raise MeasureError(f"dual program failed: {res.message}")
    return float(-res.fun)


def kr_bruteforce(mu: FiniteAtomMeasure, nu: FiniteAtomMeasure, dist) -> float:
    """Vertex enumeration of the dual polytope; oracle for tiny supports."""
    support = list(dict.fromkeys(list(mu.points) + list(nu.points)))
    n = len(support)
    if n > 5:
        raise MeasureError("brute-force dual is limited to 5 support points")
    if n == 0:
        return 0.0
    w = np.zeros(n)
    for p, m in zip(mu.points, mu.weights):
        w[support.index(p)] += m
    for p, m in zip(nu.points, nu.weights):
        w[support.index(p)] -= m
    rows, rhs = [], []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        rows += [e.copy(), -e]
        rhs += [1.0, 1.0]
    for i in range(n):
        for j in range(i + 1, n):
            d = dist(support[i], support[j])
            e = np.zeros(n)
            e[i], e[j] = 1.0, -1.0
            rows += [e.copy(), -e]
            rhs += [d, d]
    rows = np.array(rows)
    rhs = np.array(rhs)
    best = -math.inf
    for sub in itertools.combinations(range(len(rows)), n):
        a = rows[list(sub)]
        if abs(np.linalg.det(a)) < 1e-12:
            continue
        x = np.linalg.solve(a, rhs[list(sub)])
        if np.all(rows @ x <= rhs + 1e-9):
            best = max(best, float(w @ x))
    return best


# ------------------------------------------------------ set and report layer

def hausdorff_distance(tree: RootedMetricTree, a, b) -> float:
    """Hausdorff gap between two vertex sets in the tree metric."""
    a = [int(v) for v in a]
    b = [int(v) for v in b]
    if not a and not b:
        return 0.0
    if not a or not b:
        return math.inf
    worst = 0.0
    for u in a:
        d = tree.distances_from(u)
        worst = max(worst, min(d[v] for v in b))
    for v in b:
        d = tree.distances_from(v)
        worst = max(worst, min(d[u] for u in a))
    return float(worst)


@dataclass
class FddReport:
    """Per-time marginal gaps plus an optional joint-law gap."""

    times: list
    kr_values: list
    joint_kr: Optional[float] = None

    @property
    def max_kr(self) -> float:
        return max(self.kr_values) if self.kr_values else 0.0


def fdd_compare(times, laws_a, laws_b, dist, joint_a=None, joint_b=None,
                joint_limit: int = 400) -> FddReport:
    """Compare two collections of one-time laws on a shared time grid.

    Marginals are compared one by one; when both sides supply joint laws on
    tuples and the combined support is small enough, the tuples are compared
    under the max-coordinate metric as well.
    """
    times = list(times)
    if len(laws_a) != len(times) or len(laws_b) != len(times):
        raise MeasureError("time grid and law lists disagree in length")
    kr_values = [kr_distance(a, b, dist) for a, b in zip(laws_a, laws_b)]
    joint = None
    if joint_a is not None and joint_b is not None:
        support = set(joint_a.points) | set(joint_b.points)
        if len(support) <= joint_limit:
            def tup_dist(p, q):
                return max(dist(x, y) for x, y in zip(p, q))
            joint = kr_distance(joint_a, joint_b, tup_dist)
    return FddReport(times=times, kr_values=kr_values, joint_kr=joint)


@dataclass
class ConvergenceRow:
    label: str
    radius: float
    hausdorff: float
    prohorov: float
    kr: float
    m_delta: float
    flagged: bool


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)

    COLUMNS = ["label", "radius", "hausdorff", "prohorov", "kr", "m_delta", "flagged"]

    def to_csv(self, fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(self.COLUMNS)
        for r in self.rows:
            writer.writerow([r.label, repr(r.radius), repr(r.hausdorff),
                             repr(r.prohorov), repr(r.kr), repr(r.m_delta),
                             int(r.flagged)])

    def column(self, name: str, label: Optional[str] = None) -> list:
        rows = self.rows if label is None else [r for r in self.rows if r.label == label]
        return [getattr(r, name) for r in rows]


def _ball_measure(tree: RootedMetricTree, measure: SpeedMeasure, radius: float) -> FiniteAtomMeasure:
    return FiniteAtomMeasure.from_dict({
        v: measure.masses[v] for v in range(tree.n)
        if measure.masses[v] > 0 and tree.height[v] <= radius + FLOAT_SLACK
    })


def gh_vague_report(tree: RootedMetricTree, limit_measure: SpeedMeasure,
                    approximations: Sequence, radii: Sequence[float],
                    delta: float,
                    line_coords: Optional[np.ndarray] = None) -> ConvergenceReport:
    """Rows of (support Hausdorff, Prohorov, dual gap, mass floor) per radius.

    ``approximations`` is a list of (label, SpeedMeasure) pairs on the same
    ambient tree as the limit.  A radius is flagged when the limit measure
    charges a vertex sitting on the boundary sphere within geometric
    tolerance; restriction is unstable against such ties.

    ``line_coords``, an array of one coordinate per vertex with
    d(u, v) == |coord(u) - coord(v)|, marks the tree as an isometric line
    embedding; both distances then use their line fast paths.
    """
    dist = tree_metric(tree)
    if line_coords is not None:
        line_coords = np.asarray(line_coords, dtype=np.float64)
        if line_coords.shape != (tree.n,):
            raise MeasureError("line_coords must give one coordinate per vertex")
    report = ConvergenceReport()
    for radius in radii:
        target = _ball_measure(tree, limit_measure, radius)
        tgt_idx = np.fromiter(target.points, dtype=np.int64, count=len(target))
        flagged = any(
            limit_measure.masses[v] > 0 and abs(tree.height[v] - radius) <= GEOM_TOL
            for v in range(tree.n))
        for label, approx in approximations:
            got = _ball_measure(tree, approx, radius)
            got_idx = np.fromiter(got.points, dtype=np.int64, count=len(got))
            dmat = np.vstack([tree.distances_from(int(p))[tgt_idx]
                              for p in got.points]) if len(got) and len(target) \
                else np.zeros((len(got), len(target)))
            order = None
            coords = None
            if line_coords is not None:
                inside = sorted(set(got.points) | set(target.points),
                                key=lambda p: line_coords[p])
                order = inside
                coords = (line_coords[got_idx], line_coords[tgt_idx])
            report.rows.append(ConvergenceRow(
                label=str(label),
                radius=float(radius),
                hausdorff=hausdorff_distance(tree, got.points, target.points),
                prohorov=prohorov(got, target, dist, dists=dmat, coords=coords),
                kr=kr_distance(got, target, dist, path_order=order),
                m_delta=lower_mass(tree, approx, delta, radius=radius).value,
                flagged=flagged,
            ))
    return report


def polynomial_lower_bound(tree: RootedMetricTree, measure: SpeedMeasure,
                           deltas: Sequence[float], kappa: float) -> float:
    """Largest c with ball mass >= c * delta^kappa over all centers and deltas.

    Open balls; a zero return means some ball in the range carries no mass
    and no polynomial floor of that exponent exists.
    """
    best = math.inf
    for d in deltas:
        if d <= 0:
            raise MeasureError("deltas must be positive")
        for x in range(tree.n):
            m = measure.ball_mass(tree, x, d, closed=False)
            best = min(best, m / d ** kappa)
    return float(best)

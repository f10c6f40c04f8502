"""Continuous-time walks driven by a vertex measure and edge conductances.

The chain attached to a tree and a mass vector jumps from u to a neighbor v
at rate

    rate(u -> v) = c(u, v) / (2 * mass(u)),      c(u, v) = 1 / edge_length,

so big atoms slow the walk down and short edges speed it up.  Vertices with
zero mass are eliminated exactly: the walk would spend zero time there, and
folding such a vertex into its neighborhood by the star-mesh rule
c'_ij = c_i * c_j / sum(c) reproduces the law of the watched process on the
remaining states (the rule is the one-vertex Schur complement of the
conductance Laplacian, which preserves effective resistances).

Simulation is an exact event-by-event sampler; nothing is discretized in
time.  Batches derive one child seed per replicate from the master seed so
results do not depend on scheduling or thread count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .tree import FLOAT_SLACK, RootedMetricTree, SpeedMeasure

BOUNDARY = -1
JUMP_CAP = 10_000_000


class ChainError(ValueError):
    """Invalid chain construction or query."""


class JumpCapExceeded(RuntimeError):
    """A single path exceeded the jump budget."""


class WalkChain:
    """States with masses, pairwise conductances, and exact jump rates."""

    def __init__(self, tree: RootedMetricTree, states: np.ndarray, mass: np.ndarray,
                 pair_conductance: dict):
        self.tree = tree
        self.states = states
        self.mass = mass
        self.index = {int(v): i for i, v in enumerate(states)}
        self.pair_conductance = pair_conductance
        n = len(states)
        nbr: list[list[int]] = [[] for _ in range(n)]
        cond: list[list[float]] = [[] for _ in range(n)]
        for (u, v), c in sorted(pair_conductance.items()):
            iu, iv = self.index[u], self.index[v]
            nbr[iu].append(iv)
            cond[iu].append(c)
            nbr[iv].append(iu)
            cond[iv].append(c)
        self.nbr = [np.array(a, dtype=np.int64) for a in nbr]
        self.cond = [np.array(a, dtype=np.float64) for a in cond]
        self.rates = [self.cond[i] / (2.0 * self.mass[i]) for i in range(n)]
        self.exit_rate = np.array([r.sum() for r in self.rates])
        self.cum_rates = [np.cumsum(r) for r in self.rates]

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    def rate(self, u: int, v: int) -> float:
        key = (u, v) if u < v else (v, u)
        c = self.pair_conductance.get(key)
        if c is None:
            return 0.0
        return c / (2.0 * self.mass[self.index[u]])

    def jump_rates(self, u: int) -> dict[int, float]:
        iu = self.index[u]
        return {int(self.states[j]): float(r) for j, r in zip(self.nbr[iu], self.rates[iu])}

    def state_heights(self) -> np.ndarray:
        return self.tree.height[self.states]

    def nearest_state(self, vertex: int) -> int:
        """State closest to a tree vertex, lowest id on ties."""
        best = None
        best_d = math.inf
        for v in self.states:
            d = self.tree.distance(vertex, int(v))
            if d < best_d - FLOAT_SLACK or (abs(d - best_d) <= FLOAT_SLACK and (best is None or v < best)):
                best = int(v)
                best_d = d
        return best

    def diameter(self) -> float:
        """Diameter of the state set in the ambient tree metric (double sweep)."""
        if self.n_states <= 1:
            return 0.0
        a = int(self.states[0])
        for _ in range(2):
            dists = [self.tree.distance(a, int(v)) for v in self.states]
            j = int(np.argmax(dists))
            far = float(dists[j])
            a = int(self.states[j])
        return far

    def __repr__(self):
        return f"WalkChain(states={self.n_states}, total_mass={self.total_mass:.6g})"


def build_chain(tree: RootedMetricTree, measure: SpeedMeasure) -> WalkChain:
    """Conductance network of the tree with zero-mass vertices folded away."""
    if len(measure) != tree.n:
        raise ChainError("measure does not match tree vertex count")
    positive = measure.positive_vertices()
    if len(positive) < 2:
        raise ChainError("need at least two positive-mass vertices")
    adj: dict[int, dict[int, float]] = {v: {} for v in range(tree.n)}
    for v, p, ell in tree.edges():
        c = 1.0 / ell
        adj[v][p] = adj[v].get(p, 0.0) + c
        adj[p][v] = adj[p].get(v, 0.0) + c
    for w in range(tree.n):
        if measure.masses[w] > 0:
            continue
        nb = sorted(adj[w].items())
        total = sum(c for _, c in nb)
        for i in range(len(nb)):
            ui, ci = nb[i]
            for j in range(i + 1, len(nb)):
                uj, cj = nb[j]
                add = ci * cj / total
                adj[ui][uj] = adj[ui].get(uj, 0.0) + add
                adj[uj][ui] = adj[uj].get(ui, 0.0) + add
        for u, _ in nb:
            del adj[u][w]
        del adj[w]
    states = np.array(sorted(adj.keys()), dtype=np.int64)
    # connectivity of the reduced network
    seen = {int(states[0])}
    stack = [int(states[0])]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != len(states):
        raise ChainError("reduced network is disconnected")
    pair = {}
    for u in adj:
        for v, c in adj[u].items():
            if u < v:
                pair[(u, v)] = c
    mass = measure.masses[states].copy()
    return WalkChain(tree, states, mass, pair)


@dataclass(frozen=True)
class StopRule:
    """First-triggered-wins stopping: time horizon, hitting set, or root radius."""

    horizon: Optional[float] = None
    hitting: Optional[frozenset] = None
    radius: Optional[float] = None

    def __post_init__(self):
        if self.horizon is None and self.hitting is None and self.radius is None:
            raise ChainError("stop rule needs a horizon, a hitting set, or a radius")
        if self.horizon is not None and self.horizon < 0:
            raise ChainError("horizon must be nonnegative")
        if self.radius is not None and self.radius <= 0:
            raise ChainError("radius must be positive")
        if self.hitting is not None and not isinstance(self.hitting, frozenset):
            object.__setattr__(self, "hitting", frozenset(int(v) for v in self.hitting))


@dataclass
class WalkPath:
    """Piecewise-constant trajectory: states[k] holds on [jump_times[k-1], jump_times[k])."""

    states: list[int]
    jump_times: list[float]
    end_time: float
    stop_reason: str                      # "horizon" | "hit" | "boundary"
    absorbed_at: Optional[tuple[float, int]] = None

    @property
    def hitting_time(self) -> Optional[float]:
        return self.end_time if self.stop_reason == "hit" else None

    @property
    def endpoint(self) -> int:
        return self.states[-1]

    def state_at(self, time: float) -> int:
        if time < 0 or time > self.end_time + FLOAT_SLACK:
            raise ChainError("time outside recorded path")
        i = 0
        for k, tk in enumerate(self.jump_times):
            if tk <= time:
                i = k + 1
            else:
                break
        return self.states[i]


def rng_from(seed) -> np.random.Generator:
    """Coerce an int, SeedSequence, or Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_seed(master_seed: int, replicate: int) -> np.random.SeedSequence:
    """Normative per-replicate seed: hash of (master, replicate index)."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(replicate,))


def simulate(chain: WalkChain, start: int, stop: StopRule, seed,
             jump_cap: int = JUMP_CAP) -> WalkPath:
    """Exact event-driven sample of the chain until the stop rule triggers."""
    if start not in chain.index:
        raise ChainError(f"start vertex {start} is not a chain state")
    rng = rng_from(seed)
    heights = chain.tree.height
    hitting = stop.hitting
    radius = stop.radius
    horizon = stop.horizon

    cur = chain.index[start]
    states = [int(start)]
    jump_times: list[float] = []
    t = 0.0

    if hitting is not None and int(start) in hitting:
        return WalkPath(states, jump_times, 0.0, "hit")
    if radius is not None and heights[start] >= radius - FLOAT_SLACK:
        return WalkPath(states, jump_times, 0.0, "boundary", absorbed_at=(0.0, BOUNDARY))
    if horizon is not None and horizon == 0.0:
        return WalkPath(states, jump_times, 0.0, "horizon")

    exit_rate = chain.exit_rate
    cum = chain.cum_rates
    nbr = chain.nbr
    svals = chain.states
    while True:
        ex = exit_rate[cur]
        dt = rng.exponential() / ex
        nt = t + dt
        if horizon is not None and nt > horizon:
            return WalkPath(states, jump_times, horizon, "horizon")
        t = nt
        u = rng.random() * ex
        row = cum[cur]
        j = int(np.searchsorted(row, u, side="right"))
        if j >= len(row):
            j = len(row) - 1
        cur = int(nbr[cur][j])
        v = int(svals[cur])
        states.append(v)
        jump_times.append(t)
        if hitting is not None and v in hitting:
            return WalkPath(states, jump_times, t, "hit")
        if radius is not None and heights[v] >= radius - FLOAT_SLACK:
            return WalkPath(states, jump_times, t, "boundary", absorbed_at=(t, BOUNDARY))
        if len(jump_times) >= jump_cap:
            raise JumpCapExceeded(f"path exceeded {jump_cap} jumps")


def occupation_times(path: WalkPath, until: Optional[float] = None) -> dict[int, float]:
    """Time spent in each state before ``until`` (default: the whole path)."""
    if until is None:
        until = path.end_time
    if until < 0 or until > path.end_time + FLOAT_SLACK:
        raise ChainError("until outside recorded path")
    out: dict[int, float] = {}
    times = [0.0] + path.jump_times + [path.end_time]
    for k, s in enumerate(path.states):
        a = min(times[k], until)
        b = min(times[k + 1], until)
        if b > a:
            out[s] = out.get(s, 0.0) + (b - a)
    return out


def max_displacement(path: WalkPath, tree: RootedMetricTree, x: int,
                     until: Optional[float] = None) -> float:
    """Largest distance from x reached by the path before ``until``."""
    if until is None:
        until = path.end_time
    best = 0.0
    entry = [0.0] + path.jump_times
    for s, te in zip(path.states, entry):
        if te > until:
            break
        d = tree.distance(x, s)
        if d > best:
            best = d
    return best


def generator_apply(chain: WalkChain, f) -> np.ndarray:
    """Apply the chain generator to a vertex function; one value per state.

    (Lf)(u) = (1 / (2 mass(u))) * sum_v c(u,v) (f(v) - f(u))
    """
    fv = _vertex_function(chain, f)
    out = np.zeros(chain.n_states)
    for i in range(chain.n_states):
        vi = int(chain.states[i])
        acc = 0.0
        for j, c in zip(chain.nbr[i], chain.cond[i]):
            acc += c * (fv[int(chain.states[j])] - fv[vi])
        out[i] = acc / (2.0 * chain.mass[i])
    return out


def dirichlet_energy(chain: WalkChain, f, g=None) -> float:
    """Quadratic form E(f, g) = (1/2) sum over conductance pairs c * df * dg.

    Satisfies E(f, g) = -(Lf, g) weighted by the state masses.
    """
    fv = _vertex_function(chain, f)
    gv = fv if g is None else _vertex_function(chain, g)
    acc = 0.0
    for (u, v), c in chain.pair_conductance.items():
        acc += c * (fv[u] - fv[v]) * (gv[u] - gv[v])
    return 0.5 * acc


def _vertex_function(chain: WalkChain, f) -> np.ndarray:
    if isinstance(f, Mapping):
        out = np.zeros(chain.tree.n)
        for k, v in f.items():
            out[int(k)] = float(v)
        return out
    arr = np.asarray(f, dtype=np.float64)
    if arr.shape != (chain.tree.n,):
        raise ChainError("function must assign a value to every tree vertex")
    return arr


@dataclass
class EnsembleSummary:
    """Per-replicate outcomes of a batch, ordered by replicate index."""

    replicates: int
    master_seed: int
    start: int
    endpoints: list[int]
    end_times: list[float]
    hitting_times: list[Optional[float]]
    stop_reasons: list[str]
    jump_counts: list[int]
    occupations: list[dict[int, float]]
    paths: Optional[list[WalkPath]] = None

    def endpoint_samples(self) -> list[int]:
        return list(self.endpoints)

    def mean_hitting_time(self):
        vals = [t for t in self.hitting_times if t is not None]
        if not vals:
            return None, None, 0
        arr = np.array(vals)
        se = arr.std(ddof=1) / math.sqrt(len(arr)) if len(arr) > 1 else 0.0
        return float(arr.mean()), float(se), len(arr)

    def occupation_matrix(self, vertices: Sequence[int]) -> np.ndarray:
        out = np.zeros((self.replicates, len(vertices)))
        pos = {int(v): i for i, v in enumerate(vertices)}
        for r, occ in enumerate(self.occupations):
            for v, tv in occ.items():
                if v in pos:
                    out[r, pos[v]] = tv
        return out

    def to_json(self) -> str:
        payload = {
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "start": self.start,
            "endpoints": self.endpoints,
            "end_times": self.end_times,
            "hitting_times": self.hitting_times,
            "stop_reasons": self.stop_reasons,
            "jump_counts": self.jump_counts,
            "occupations": [
                {str(k): v for k, v in sorted(occ.items())} for occ in self.occupations
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def batch_simulate(chain: WalkChain, start: int, stop: StopRule, replicates: int,
                   master_seed: int, threads: int = 1, keep_paths: bool = False,
                   jump_cap: int = JUMP_CAP) -> EnsembleSummary:
    """Run independent replicates; replicate k always uses derive_seed(master, k)."""
    if replicates < 1:
        raise ChainError("replicates must be at least 1")

    def one(k: int) -> WalkPath:
        return simulate(chain, start, stop, derive_seed(master_seed, k), jump_cap=jump_cap)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            paths = list(pool.map(one, range(replicates)))
    else:
        paths = [one(k) for k in range(replicates)]
    summary = EnsembleSummary(
        replicates=replicates,
        master_seed=master_seed,
        start=int(start),
        endpoints=[p.endpoint for p in paths],
        end_times=[p.end_time for p in paths],
        hitting_times=[p.hitting_time for p in paths],
        stop_reasons=[p.stop_reason for p in paths],
        jump_counts=[len(p.jump_times) for p in paths],
        occupations=[occupation_times(p) for p in paths],
        paths=paths if keep_paths else None,
    )
    return summary


def export_paths_csv(paths: Iterable[WalkPath], fh):
    """Rows replicate,jump_index,time,state; index 0 is the starting state."""
    writer = csv.writer(fh)
    writer.writerow(["replicate", "jump_index", "time", "state"])
    for r, p in enumerate(paths):
        writer.writerow([r, 0, repr(0.0), p.states[0]])
        for k, (t, s) in enumerate(zip(p.jump_times, p.states[1:]), start=1):
            writer.writerow([r, k, repr(float(t)), s])

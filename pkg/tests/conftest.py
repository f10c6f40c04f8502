import numpy as np
import pytest

from treeflow.tree import RootedMetricTree, SpeedMeasure, build_tree


def random_tree(rng, n, low=0.2, high=1.5, root=0):
    """Random recursive tree: vertex v attaches to a uniform earlier vertex."""
    parents = {}
    lengths = {}
    for v in range(1, n):
        parents[v] = int(rng.integers(0, v))
        lengths[v] = float(rng.uniform(low, high))
    return build_tree(parents, lengths, root)


def random_masses(rng, n, low=0.3, high=2.0):
    return SpeedMeasure(rng.uniform(low, high, size=n))


def floyd_warshall_distances(tree: RootedMetricTree) -> np.ndarray:
    """Independent all-pairs oracle: dense relaxation over tree edges."""
    n = tree.n
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for v, p, ell in tree.edges():
        d[v, p] = d[p, v] = ell
    for k in range(n):
        d = np.minimum(d, d[:, k][:, None] + d[k][None, :])
    return d


def path_tree(lengths):
    """Path 0-1-2-... rooted at 0 with the given edge lengths."""
    parents = {i + 1: i for i in range(len(lengths))}
    ells = {i + 1: float(l) for i, l in enumerate(lengths)}
    return build_tree(parents, ells, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)

from pathlib import Path

import numpy as np
import pytest

from lightpath_lab.physical_layer import TableDrivenNsr
from lightpath_lab.topology import Ordering, Topology, Link, build_path_table, load_topology

DATA_DIR = Path(__file__).parent.parent / "src" / "lightpath_lab" / "data"
NSFNET_PATH = DATA_DIR / "nsfnet_deeprmsa.json"
GN_PATH = DATA_DIR / "nsfnet_deeprmsa_gn.json"


def make_topology(edges):
    """Build a Topology from (a, b, length_km) triples."""
    nodes = sorted({str(n) for e in edges for n in e[:2]})
    return Topology(
        nodes=tuple(nodes),
        links=tuple(Link(str(a), str(b), float(l)) for a, b, l in edges),
    )


def unit_nsr(topology, value=1.0):
    """Constant per-link NSR; the direct one-link capacity is then exactly
    2 * 100 * log2(1 + 1/value) Gbps."""
    return TableDrivenNsr(np.full(topology.num_links, value))


@pytest.fixture(scope="session")
def triangle():
    return make_topology([("A", "B", 1.0), ("B", "C", 1.0), ("A", "C", 1.0)])


@pytest.fixture(scope="session")
def line4():
    return make_topology([("A", "B", 1.0), ("B", "C", 1.0), ("C", "D", 1.0)])


@pytest.fixture(scope="session")
def nsfnet():
    return load_topology(NSFNET_PATH)


@pytest.fixture(scope="session")
def nsfnet_nsr(nsfnet):
    from lightpath_lab.physical_layer import load_nsr_model

    return load_nsr_model(GN_PATH, nsfnet)


@pytest.fixture(scope="session")
def nsfnet_table(nsfnet, nsfnet_nsr):
    return build_path_table(nsfnet, 5, Ordering.HOPS, nsfnet_nsr)


def enumerate_simple_paths(topology, src, dst):
    """Exhaustive DFS enumeration of all simple paths (test oracle, kept
    independent of the package's networkx-based enumeration)."""
    adj = {i: [] for i in range(topology.num_nodes)}
    name_to_idx = {n: i for i, n in enumerate(topology.nodes)}
    lengths = {}
    link_ids = {}
    for idx, link in enumerate(topology.links):
        a, b = name_to_idx[link.a], name_to_idx[link.b]
        adj[a].append(b)
        adj[b].append(a)
        lengths[frozenset((a, b))] = link.length_km
        link_ids[frozenset((a, b))] = idx
    s, d = name_to_idx[src], name_to_idx[dst]
    paths = []

    def dfs(node, visited, seq):
        if node == d:
            hops = len(seq) - 1
            length = sum(lengths[frozenset((seq[i], seq[i + 1]))] for i in range(hops))
            links = tuple(link_ids[frozenset((seq[i], seq[i + 1]))] for i in range(hops))
            paths.append((tuple(seq), links, hops, length))
            return
        for nxt in adj[node]:
            if nxt not in visited:
                visited.add(nxt)
                seq.append(nxt)
                dfs(nxt, visited, seq)
                seq.pop()
                visited.remove(nxt)

    dfs(s, {s}, [s])
    return paths


def oracle_k_shortest(topology, src, dst, k, ordering):
    """Brute-force top-k: enumerate every simple path, sort by the full
    (primary, secondary, node-sequence) key, truncate."""
    paths = enumerate_simple_paths(topology, src, dst)
    if ordering == Ordering.HOPS:
        paths.sort(key=lambda p: (p[2], p[3], p[0]))
    else:
        paths.sort(key=lambda p: (p[3], p[2], p[0]))
    return paths[:k]


def random_connected_topology(rng, n_nodes, extra_edges, max_len=10.0):
    """Random connected graph: a random spanning tree plus extra edges."""
    nodes = [f"n{i}" for i in range(n_nodes)]
    edges = []
    seen = set()
    for i in range(1, n_nodes):
        j = int(rng.integers(0, i))
        seen.add(frozenset((i, j)))
        edges.append((nodes[i], nodes[j], float(rng.integers(1, max_len) )))
    attempts = 0
    while extra_edges > 0 and attempts < 200:
        attempts += 1
        i, j = rng.integers(0, n_nodes, size=2)
        if i == j or frozenset((int(i), int(j))) in seen:
            continue
        seen.add(frozenset((int(i), int(j))))
        edges.append((nodes[int(i)], nodes[int(j)], float(rng.integers(1, max_len))))
        extra_edges -= 1
    return make_topology(edges)


def check_state_invariants(env):
    """Independent full-state consistency check (used step-by-step in the
    conservation sweeps):

    - every registered lightpath tiles exactly its links at its channel;
    - nonzero occupancy cells are exactly the union of those footprints;
    - remaining slots never negative, consistent with capacity;
    - accepted == services carried; accepted + blocked == processed.
    """
    st = env.state
    expected = np.zeros_like(st.occupancy)
    services = 0
    n_lightpaths = st.next_lightpath_id - 1
    for lp_id, rec in env.lightpaths().items():
        assert rec.remaining_slots >= 0
        for link in rec.links:
            assert expected[link, rec.channel] == 0, "overlapping lightpaths"
            expected[link, rec.channel] = lp_id
        cand = env.table.paths[rec.pair_idx][rec.path_rank]
        from lightpath_lab.physical_layer import max_services

        cap_slots = max_services(cand.capacity_gbps, env.config.request_size_gbps)
        assert rec.initial_slots == cap_slots - 1
        services += rec.initial_slots - rec.remaining_slots
    assert np.array_equal(expected, st.occupancy), "occupancy cells not tiled by registry"
    assert services + n_lightpaths == st.accepted
    assert st.accepted + st.blocked == st.requests_processed

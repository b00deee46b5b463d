import json

import numpy as np
import pytest

from conftest import (
    make_topology,
    oracle_k_shortest,
    random_connected_topology,
    unit_nsr,
)
from lightpath_lab.topology import (
    CandidatePath,
    Ordering,
    TopologyError,
    build_path_table,
    k_shortest_paths,
    load_topology,
)


class TestLoadTopology:
    def test_triangle(self, triangle):
        assert triangle.num_nodes == 3
        assert triangle.num_links == 3

    def test_nsfnet_counts(self, nsfnet):
        assert nsfnet.num_nodes == 14
        assert nsfnet.num_links == 22

    def test_disconnected_rejected(self):
        with pytest.raises(TopologyError, match="connected"):
            make_topology([("A", "B", 1.0), ("C", "D", 1.0)])

    def test_nonpositive_length_rejected(self):
        with pytest.raises(TopologyError, match="length"):
            make_topology([("A", "B", 0.0), ("B", "C", 1.0), ("A", "C", 1.0)])

    def test_duplicate_link_rejected(self):
        with pytest.raises(TopologyError, match="duplicate"):
            make_topology([("A", "B", 1.0), ("B", "A", 2.0), ("B", "C", 1.0)])

    def test_self_loop_rejected(self):
        with pytest.raises(TopologyError, match="self-loop"):
            make_topology([("A", "A", 1.0), ("A", "B", 1.0)])

    def test_unknown_node_rejected(self):
        with pytest.raises(TopologyError, match="unknown node"):
            load_topology({"nodes": ["A", "B"], "links": [{"a": "A", "b": "Z", "length_km": 1}]})

    def test_parse_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{nonsense")
        with pytest.raises(TopologyError, match="parse"):
            load_topology(bad)

    def test_file_round_trip(self, tmp_path, triangle):
        path = tmp_path / "tri.json"
        path.write_text(json.dumps(triangle.to_json()))
        again = load_topology(path)
        assert again == triangle


class TestCandidatePath:
    def test_revisiting_node_rejected(self):
        with pytest.raises(ValueError, match="revisits"):
            CandidatePath(node_seq=(0, 1, 0), link_seq=(0, 1), hops=2, length_km=2.0)

    def test_hop_mismatch_rejected(self):
        with pytest.raises(ValueError, match="hop count"):
            CandidatePath(node_seq=(0, 1), link_seq=(0, 1), hops=2, length_km=2.0)


class TestKShortestPaths:
    def test_triangle_two_paths(self, triangle):
        paths = k_shortest_paths(triangle, "A", "B", 2, Ordering.HOPS)
        assert len(paths) == 2
        assert paths[0].hops == 1 and paths[0].length_km == 1.0
        assert paths[1].hops == 2 and paths[1].length_km == 2.0

    def test_ordering_criteria_disagree(self):
        # P1: 2 hops / 100 km, P2: 1 hop / 300 km between the same pair.
        topo = make_topology([("A", "M", 50.0), ("M", "B", 50.0), ("A", "B", 300.0)])
        by_hops = k_shortest_paths(topo, "A", "B", 2, Ordering.HOPS)
        by_length = k_shortest_paths(topo, "A", "B", 2, Ordering.LENGTH)
        assert by_hops[0].hops == 1 and by_hops[0].length_km == 300.0
        assert by_length[0].hops == 2 and by_length[0].length_km == 100.0

    def test_same_inputs_same_output(self, nsfnet):
        a = k_shortest_paths(nsfnet, "1", "12", 5, Ordering.HOPS)
        b = k_shortest_paths(nsfnet, "1", "12", 5, Ordering.HOPS)
        assert a == b

    def test_fewer_paths_than_k(self):
        topo = make_topology([("A", "B", 1.0)])
        assert len(k_shortest_paths(topo, "A", "B", 4, Ordering.HOPS)) == 1

    def test_src_equals_dst_rejected(self, triangle):
        with pytest.raises(ValueError):
            k_shortest_paths(triangle, "A", "A", 1, Ordering.HOPS)

    @pytest.mark.parametrize("ordering", [Ordering.HOPS, Ordering.LENGTH])
    def test_nsfnet_against_bruteforce(self, nsfnet, ordering):
        got = k_shortest_paths(nsfnet, "1", "12", 5, ordering)
        want = oracle_k_shortest(nsfnet, "1", "12", 5, ordering)
        assert [(p.node_seq, p.hops, p.length_km) for p in got] == [
            (w[0], w[2], w[3]) for w in want
        ]

    @pytest.mark.parametrize("ordering", [Ordering.HOPS, Ordering.LENGTH])
    def test_random_graphs_against_bruteforce(self, ordering):
        rng = np.random.default_rng(7)
        for trial in range(25):
            topo = random_connected_topology(rng, int(rng.integers(4, 8)), int(rng.integers(0, 5)))
            names = topo.nodes
            i, j = rng.choice(len(names), size=2, replace=False)
            k = int(rng.integers(1, 6))
            got = k_shortest_paths(topo, names[i], names[j], k, ordering)
            want = oracle_k_shortest(topo, names[i], names[j], k, ordering)
            assert [(p.node_seq, p.hops, p.length_km) for p in got] == [
                (w[0], w[2], w[3]) for w in want
            ], f"trial {trial}"

    def test_rank_keys_monotone(self, nsfnet):
        for src, dst in [("1", "8"), ("4", "13"), ("2", "14")]:
            paths = k_shortest_paths(nsfnet, src, dst, 8, Ordering.HOPS)
            keys = [(p.hops, p.length_km, p.node_seq) for p in paths]
            assert keys == sorted(keys)
            paths = k_shortest_paths(nsfnet, src, dst, 8, Ordering.LENGTH)
            keys = [(p.length_km, p.hops, p.node_seq) for p in paths]
            assert keys == sorted(keys)

    def test_k1_agreement_when_unique_minimum(self, triangle):
        # Unique hop-minimal path that is also length-minimal.
        hops = k_shortest_paths(triangle, "A", "B", 1, Ordering.HOPS)
        length = k_shortest_paths(triangle, "A", "B", 1, Ordering.LENGTH)
        assert hops == length


class TestHopsCapacityOrdering:
    def test_candidate_stage_is_first_k_by_hops(self, triangle):
        # No tie-closure and no lexicographic re-sort at the candidate stage.
        paths = k_shortest_paths(triangle, "A", "B", 2, Ordering.HOPS_CAPACITY)
        assert len(paths) == 2
        assert {p.hops for p in paths} == {1, 2}

    def test_rerank_prefers_capacity_per_hop(self):
        # Direct link is long (low capacity); the 2-hop detour is short with
        # far more capacity per hop and must outrank it.
        topo = make_topology([("A", "B", 4000.0), ("A", "M", 300.0), ("M", "B", 300.0)])
        from lightpath_lab.physical_layer import load_nsr_model

        nsr = load_nsr_model({"per_km_nsr": 0.002}, topo)
        table = build_path_table(topo, 2, Ordering.HOPS_CAPACITY, nsr)
        row = table.paths_for(0, 1)
        # direct: sum NSR 8.0 -> ~34 Gbps (quantizes to 0, ranked last);
        # detour: sum NSR 1.2 -> ~175 Gbps (quantizes to 100).
        assert row[0].hops == 2
        assert row[1].hops == 1

    def test_quantized_ties_prefer_longer_path(self):
        # Two 2-hop alternatives whose capacities quantize equal at the
        # 100 Gbps quantum; the longer one ranks first. A finer quantum
        # separates them and the higher-capacity one wins outright.
        topo = make_topology(
            [("A", "X", 0.684), ("X", "B", 0.684), ("A", "Y", 1.0), ("Y", "B", 1.0)]
        )
        from lightpath_lab.physical_layer import load_nsr_model

        nsr = load_nsr_model({"per_km_nsr": 0.5}, topo)
        coarse = build_path_table(topo, 2, Ordering.HOPS_CAPACITY, nsr)
        row = coarse.paths_for(0, 1)
        assert row[0].length_km == pytest.approx(2.0)  # longer first on ties
        fine = build_path_table(
            topo, 2, Ordering.HOPS_CAPACITY, nsr, ranking_quantum_gbps=50.0
        )
        row = fine.paths_for(0, 1)
        assert row[0].length_km == pytest.approx(1.368)

    def test_hops_ordering_unaffected(self):
        topo = make_topology(
            [("A", "X", 0.684), ("X", "B", 0.684), ("A", "Y", 1.0), ("Y", "B", 1.0)]
        )
        table = build_path_table(topo, 2, Ordering.HOPS, unit_nsr(topo, 0.5))
        assert table.paths_for(0, 1)[0].length_km == pytest.approx(1.368)


class TestBuildPathTable:
    def test_triangle_k1(self, triangle):
        table = build_path_table(triangle, 1, Ordering.HOPS, unit_nsr(triangle))
        assert table.num_pairs == 3
        for row in table.paths:
            assert len(row) == 1
            assert row[0].hops == 1

    def test_k_exceeding_simple_path_count(self, triangle):
        # A triangle pair has exactly two simple paths.
        table = build_path_table(triangle, 10, Ordering.HOPS, unit_nsr(triangle))
        for (u, v) in table.pairs:
            assert table.num_paths(u, v) == 2

    def test_capacities_filled(self, nsfnet_table):
        for row in nsfnet_table.paths:
            for path in row:
                assert path.capacity_gbps is not None and path.capacity_gbps > 0

    def test_nsfnet_shape_and_spot_checks(self, nsfnet, nsfnet_table):
        assert nsfnet_table.num_pairs == 91
        names = nsfnet.nodes
        rng = np.random.default_rng(3)
        for pidx in rng.choice(91, size=3, replace=False):
            u, v = nsfnet_table.pairs[pidx]
            want = oracle_k_shortest(nsfnet, names[u], names[v], 5, Ordering.HOPS)
            got = nsfnet_table.paths[pidx]
            assert [(p.node_seq, p.hops) for p in got] == [(w[0], w[2]) for w in want]

    def test_signatures_unique(self, nsfnet_table):
        sigs = {
            nsfnet_table.path_signature(p, r)
            for p in range(nsfnet_table.num_pairs)
            for r in range(len(nsfnet_table.paths[p]))
        }
        assert len(sigs) == sum(len(row) for row in nsfnet_table.paths)

    def test_pair_index_symmetric(self, nsfnet_table):
        assert nsfnet_table.pair_index(3, 7) == nsfnet_table.pair_index(7, 3)

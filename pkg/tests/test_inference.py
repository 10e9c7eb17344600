import itertools

import numpy as np
import pytest

from crashseq.bayesnet import BayesNet, Cpt, Dag, LevelMismatch, joint_probability
from crashseq.inference import (
    Query,
    ZeroEvidenceProbability,
    bar_chart_svg,
    crosstab_to_csv,
    load_queries,
    make_default_queries,
    query,
    result_to_csv,
    sample_forward,
    scenario_report,
)


def build_net(nodes, levels, arcs, tables, total_weight=1000.0):
    dag = Dag(tuple(nodes), {n: tuple(levels[n]) for n in nodes}, frozenset(arcs))
    cpts = {}
    for node in nodes:
        parents = dag.parents(node)
        cards = tuple(len(levels[p]) for p in parents)
        probs = np.asarray(tables[node], dtype=np.float64)
        if probs.ndim == 1:
            probs = probs[None, :]
        cpts[node] = Cpt(node, parents, cards, probs)
    return BayesNet(dag, cpts, None, total_weight)


def random_net(rng, n_nodes, max_levels=3, arc_p=0.4):
    names = [f"N{i}" for i in range(n_nodes)]
    levels = {n: [f"l{j}" for j in range(rng.integers(2, max_levels + 1))] for n in names}
    arcs = [
        (names[i], names[j])
        for i in range(n_nodes)
        for j in range(i + 1, n_nodes)
        if rng.random() < arc_p
    ]
    dag = Dag(tuple(names), {n: tuple(levels[n]) for n in names}, frozenset(arcs))
    tables = {}
    for node in names:
        parents = dag.parents(node)
        size = int(np.prod([len(levels[p]) for p in parents])) if parents else 1
        tables[node] = rng.dirichlet(np.full(len(levels[node]), 2.0), size=size)
    return build_net(names, levels, arcs, tables)


def exact_posterior(net, evidence, targets):
    """Enumerate the joint and sum out everything but the targets."""
    names = net.dag.nodes
    post = {}
    norm = 0.0
    for combo in itertools.product(*(net.dag.levels[n] for n in names)):
        assignment = dict(zip(names, combo))
        if any(assignment[k] != v for k, v in evidence.items()):
            continue
        p = joint_probability(net, assignment)
        norm += p
        key = tuple(assignment[t] for t in targets)
        key = key[0] if len(targets) == 1 else key
        post[key] = post.get(key, 0.0) + p
    return {k: v / norm for k, v in post.items()}, norm


def tv_distance(estimate, exact, levels):
    return 0.5 * sum(abs(estimate.get(lv, 0.0) - exact.get(lv, 0.0)) for lv in levels)


class TestForwardSampling:
    def test_single_node_binomial(self):
        net = build_net(["X"], {"X": ["a", "b"]}, [], {"X": [0.75, 0.25]})
        codes = sample_forward(net, 10000, seed=1)
        freq = float((codes[:, 0] == 0).mean())
        sigma = np.sqrt(0.75 * 0.25 / 10000)
        assert abs(freq - 0.75) < 3 * sigma

    def test_deterministic_cpts_unique_assignment(self):
        net = build_net(
            ["A", "B"],
            {"A": ["0", "1"], "B": ["0", "1"]},
            [("A", "B")],
            {"A": [1.0, 0.0], "B": [[0.0, 1.0], [1.0, 0.0]]},
        )
        codes = sample_forward(net, 500, seed=2)
        assert np.all(codes[:, 0] == 0)
        assert np.all(codes[:, 1] == 1)

    def test_empirical_joint_matches_enumeration(self):
        rng = np.random.default_rng(3)
        net = random_net(rng, 4)
        n = 200000
        codes = sample_forward(net, n, seed=4)
        names = net.dag.nodes
        counts = {}
        for row in codes:
            key = tuple(net.dag.levels[nm][c] for nm, c in zip(names, row))
            counts[key] = counts.get(key, 0) + 1
        exact = {
            combo: joint_probability(net, dict(zip(names, combo)))
            for combo in itertools.product(*(net.dag.levels[nm] for nm in names))
        }
        tv = 0.5 * sum(
            abs(counts.get(k, 0) / n - p) for k, p in exact.items()
        )
        assert tv < 0.01

    def test_repeatable(self):
        rng = np.random.default_rng(5)
        net = random_net(rng, 3)
        assert np.array_equal(sample_forward(net, 100, seed=7), sample_forward(net, 100, seed=7))


class TestQuery:
    def test_empty_evidence_is_marginal(self):
        rng = np.random.default_rng(6)
        net = random_net(rng, 4)
        target = net.dag.nodes[-1]
        result = query(net, Query({}, (target,), replications=3, samples=50000, seed=8))
        exact, _ = exact_posterior(net, {}, (target,))
        estimate = dict(zip(result.levels, result.cond_prob))
        assert tv_distance(estimate, exact, result.levels) < 0.02

    def test_empty_evidence_equals_forward_particles(self):
        rng = np.random.default_rng(7)
        net = random_net(rng, 4)
        from crashseq.inference import _replication_rng, _weighted_particles

        codes, weights = _weighted_particles(net, {}, 300, _replication_rng(11, 0))
        forward = sample_forward(net, 300, seed=11)
        assert np.array_equal(codes, forward)
        assert np.all(weights == 1.0)

    def test_evidence_fixing_all_parents_reads_cpt_row(self):
        net = build_net(
            ["A", "B"],
            {"A": ["0", "1"], "B": ["x", "y", "z"]},
            [("A", "B")],
            {"A": [0.6, 0.4], "B": [[0.5, 0.3, 0.2], [0.1, 0.2, 0.7]]},
        )
        result = query(net, Query({"A": "1"}, ("B",), replications=5, samples=20000, seed=9))
        estimate = dict(zip(result.levels, result.cond_prob))
        exact = {"x": 0.1, "y": 0.2, "z": 0.7}
        assert tv_distance(estimate, exact, result.levels) < 0.01

    def test_random_evidence_against_enumeration(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            net = random_net(rng, int(rng.integers(3, 6)))
            nodes = list(net.dag.nodes)
            ev_node = nodes[int(rng.integers(0, len(nodes) - 1))]
            target = nodes[-1] if ev_node != nodes[-1] else nodes[0]
            level = net.dag.levels[ev_node][0]
            result = query(
                net, Query({ev_node: level}, (target,), replications=4, samples=30000,
                           seed=int(rng.integers(0, 1000)))
            )
            exact, _ = exact_posterior(net, {ev_node: level}, (target,))
            estimate = dict(zip(result.levels, result.cond_prob))
            assert tv_distance(estimate, exact, result.levels) < 0.02

    def test_count_conventions(self):
        rng = np.random.default_rng(12)
        net = random_net(rng, 3)
        net.data_total_weight = 5000.0
        ev_node, target = net.dag.nodes[0], net.dag.nodes[-1]
        level = net.dag.levels[ev_node][0]
        result = query(net, Query({ev_node: level}, (target,), replications=6,
                                  samples=40000, seed=13))
        exact, p_ev = exact_posterior(net, {ev_node: level}, (target,))
        assert result.scale == 5000.0
        # conditional counts sum to the full scale, joint counts to its evidence share
        assert result.mean_cond_count.sum() == pytest.approx(5000.0, rel=1e-9)
        assert result.mean_joint_count.sum() == pytest.approx(5000.0 * p_ev, rel=0.05)
        assert result.cond_prob.sum() == pytest.approx(1.0, abs=1e-6)

    def test_two_targets_crosstab(self):
        rng = np.random.default_rng(14)
        net = random_net(rng, 4)
        t1, t2 = net.dag.nodes[1], net.dag.nodes[2]
        result = query(net, Query({}, (t1, t2), replications=3, samples=20000, seed=15))
        rows, cols, grid = result.crosstab()
        assert rows == net.dag.levels[t1]
        assert cols == net.dag.levels[t2]
        assert grid.shape == (len(rows), len(cols))
        exact, _ = exact_posterior(net, {}, (t1, t2))
        estimate = dict(zip(result.levels, result.cond_prob))
        assert tv_distance(estimate, exact, result.levels) < 0.02

    def test_zero_evidence_probability_raises(self):
        net = build_net(
            ["A", "E"],
            {"A": ["0", "1"], "E": ["0", "1"]},
            [("A", "E")],
            {"A": [1.0, 0.0], "E": [[1.0, 0.0], [0.0, 1.0]]},
        )
        with pytest.raises(ZeroEvidenceProbability):
            query(net, Query({"E": "1"}, ("A",), replications=3, samples=50, seed=16))

    def test_partial_drop_flagged(self):
        # evidence is impossible under A=0 (half the particles); with tiny N
        # some replications draw only A=0 and are dropped
        net = build_net(
            ["A", "E"],
            {"A": ["0", "1"], "E": ["0", "1"]},
            [("A", "E")],
            {"A": [0.5, 0.5], "E": [[1.0, 0.0], [0.7, 0.3]]},
        )
        result = query(net, Query({"E": "1"}, ("A",), replications=60, samples=3, seed=17))
        assert 0 < result.dropped_replications < 60

    def test_sd_scales_with_sqrt_n(self):
        rng = np.random.default_rng(18)
        net = random_net(rng, 3)
        target = net.dag.nodes[-1]
        ns = [500, 5000, 50000]
        sds = []
        for n in ns:
            result = query(net, Query({}, (target,), replications=12, samples=n, seed=19))
            sds.append(float(result.sd_cond_count.mean()))
        slope = np.polyfit(np.log(ns), np.log(sds), 1)[0]
        assert -0.65 <= slope <= -0.35

    def test_validation(self):
        rng = np.random.default_rng(20)
        net = random_net(rng, 3)
        with pytest.raises(ValueError):
            Query({}, (), 10, 10)
        with pytest.raises(ValueError):
            Query({"N0": "l0"}, ("N0",), 10, 10)
        with pytest.raises(LevelMismatch):
            query(net, Query({"N0": "nope"}, ("N1",), 2, 10))


class TestReporting:
    def _result(self, seed=21):
        rng = np.random.default_rng(seed)
        net = random_net(rng, 3)
        net.data_total_weight = 900.0
        return net, query(net, Query({}, (net.dag.nodes[0],), replications=3,
                                     samples=2000, seed=22, name="demo"))

    def test_csv_shape(self):
        _, result = self._result()
        lines = result_to_csv(result).strip().splitlines()
        assert lines[0].startswith("level,mean_joint_count")
        assert len(lines) == 1 + len(result.levels)

    def test_crosstab_csv(self):
        rng = np.random.default_rng(23)
        net = random_net(rng, 3)
        result = query(net, Query({}, (net.dag.nodes[0], net.dag.nodes[1]),
                                  replications=2, samples=1000, seed=24))
        text = crosstab_to_csv(result)
        assert text.count("\n") == len(net.dag.levels[net.dag.nodes[0]]) + 1

    def test_svg_bar_chart(self):
        _, result = self._result()
        svg = bar_chart_svg(result)
        assert svg.startswith("<svg") and svg.count("<rect") == len(result.levels)

    def test_empty_report(self):
        net, _ = self._result()
        text = scenario_report(net, [])
        assert "No queries" in text

    def test_report_deterministic(self):
        net, result = self._result()
        net2, result2 = self._result()
        assert scenario_report(net, [result]) == scenario_report(net2, [result2])

    def test_report_contains_scenario_lines(self):
        net, result = self._result()
        text = scenario_report(net, [result])
        assert "Top cells:" in text and "mean count" in text

    def test_query_file_round_trip(self, tmp_path):
        path = tmp_path / "queries.json"
        path.write_text(
            '[{"evidence": {"maxsev": "Fatal"}, "targets": ["seqtype"], "R": 5, "N": 100}]'
        )
        queries = load_queries(path, seed=3)
        assert queries[0].evidence == {"maxsev": "Fatal"}
        assert queries[0].replications == 5 and queries[0].samples == 100
        assert queries[0].seed == 3

    def test_make_default_queries(self):
        levels = {
            "seqtype": ["d1", "j2"],
            "maxsev": ["No apparent injury", "Fatal"],
            "typint": ["4-Legged", "3-Legged"],
            "tcd": ["Signal+Signal", "Sign+Sign"],
        }
        tables = {
            "seqtype": [0.3, 0.7],
            "maxsev": [[0.9, 0.1], [0.8, 0.2]],
            "typint": [0.6, 0.4],
            "tcd": [0.5, 0.5],
        }
        net = build_net(
            ["seqtype", "maxsev", "typint", "tcd"], levels,
            [("seqtype", "maxsev")], tables,
        )
        queries = make_default_queries(net, 4, 100, seed=0)
        names = {q.name for q in queries}
        assert "seqtype_given_fatal" in names
        assert any(n.startswith("odd_given_") for n in names)
        assert "seqtype_at_signals" in names
        assert any(q.evidence == {"seqtype": "j2"} for q in queries)

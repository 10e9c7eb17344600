"""Discrete Bayesian network: scoring, structure search, parameters.

The network score is the weighted data log-likelihood under per-family
maximum-likelihood tables minus a penalty times the parameter count
(default penalty 2, higher score = better fit). Structure search is plain
hill climbing over add/delete/reverse arc operators with optional forced
and forbidden arcs. Arc strength is the score change caused by removing
the arc: negative means removal hurts, i.e. a strong dependency.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class BayesNetError(Exception):
    pass


class CycleError(BayesNetError):
    pass


class LevelMismatch(BayesNetError):
    pass


class ZeroProbabilityRecord(BayesNetError):
    pass


class InfeasibleConstraints(BayesNetError):
    pass


class ArcNotInGraph(BayesNetError):
    pass


class IncompleteAssignment(BayesNetError):
    pass


class CategoricalData:
    """Weighted records over categorical variables, integer-coded columns."""

    def __init__(
        self,
        variables: Sequence[str],
        levels: Mapping[str, Sequence[str]],
        codes: np.ndarray,
        weights: np.ndarray | None = None,
    ):
        self.variables = tuple(variables)
        self.levels = {v: tuple(levels[v]) for v in self.variables}
        self.codes = np.asarray(codes, dtype=np.int64)
        n = self.codes.shape[0]
        self.weights = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        if self.codes.shape != (n, len(self.variables)):
            raise ValueError("codes must be records x variables")
        if self.weights.shape != (n,) or (self.weights <= 0).any():
            raise ValueError("weights must be positive, one per record")
        self._col = {v: i for i, v in enumerate(self.variables)}
        for v in self.variables:
            if self.codes[:, self._col[v]].max(initial=-1) >= len(self.levels[v]):
                raise LevelMismatch(f"codes of {v} exceed its level set")

    @classmethod
    def from_records(
        cls,
        records: Sequence[Mapping[str, str]],
        weights: Sequence[float] | None = None,
        levels: Mapping[str, Sequence[str]] | None = None,
        variables: Sequence[str] | None = None,
    ) -> "CategoricalData":
        if not records:
            raise ValueError("no records")
        if variables is None:
            variables = sorted(records[0])
        if levels is None:
            levels = {
                v: tuple(sorted({str(r[v]) for r in records})) for v in variables
            }
        index = {v: {lvl: i for i, lvl in enumerate(levels[v])} for v in variables}
        codes = np.empty((len(records), len(variables)), dtype=np.int64)
        for i, rec in enumerate(records):
            for j, v in enumerate(variables):
                try:
                    codes[i, j] = index[v][str(rec[v])]
                except KeyError:
                    raise LevelMismatch(f"record {i}: {rec[v]!r} not a level of {v}") from None
        w = None if weights is None else np.asarray(list(weights), dtype=np.float64)
        return cls(variables, levels, codes, w)

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def column(self, var: str) -> np.ndarray:
        return self.codes[:, self._col[var]]

    def cardinality(self, var: str) -> int:
        return len(self.levels[var])

    def parent_config_index(self, parents: Sequence[str]) -> tuple[np.ndarray, int]:
        """Mixed-radix index of each record's parent level combination."""
        idx = np.zeros(self.n, dtype=np.int64)
        size = 1
        for p in parents:
            idx = idx * self.cardinality(p) + self.column(p)
            size *= self.cardinality(p)
        return idx, size


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over named categorical variables."""

    nodes: tuple[str, ...]
    levels: dict[str, tuple[str, ...]]
    arcs: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self):
        names = set(self.nodes)
        for p, c in self.arcs:
            if p == c:
                raise CycleError(f"self-loop on {p}")
            if p not in names or c not in names:
                raise ValueError(f"arc {p}->{c} references unknown node")
        self.topological_order()  # raises CycleError on cycles

    @classmethod
    def from_data(cls, data: CategoricalData, arcs: Iterable[tuple[str, str]] = ()) -> "Dag":
        return cls(data.variables, dict(data.levels), frozenset(arcs))

    def parents(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(p for p, c in self.arcs if c == node))

    def children(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(c for p, c in self.arcs if p == node))

    def has_path(self, src: str, dst: str, skip_arc: tuple[str, str] | None = None) -> bool:
        stack, seen = [src], set()
        while stack:
            cur = stack.pop()
            if cur == dst:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            for p, c in self.arcs:
                if p == cur and (p, c) != skip_arc:
                    stack.append(c)
        return False

    def topological_order(self) -> tuple[str, ...]:
        indeg = {n: 0 for n in self.nodes}
        for _, c in self.arcs:
            indeg[c] += 1
        ready = sorted(n for n, d in indeg.items() if d == 0)
        order = []
        while ready:
            cur = ready.pop(0)
            order.append(cur)
            added = []
            for p, c in self.arcs:
                if p == cur:
                    indeg[c] -= 1
                    if indeg[c] == 0:
                        added.append(c)
            if added:
                ready = sorted(ready + added)
        if len(order) != len(self.nodes):
            raise CycleError("graph has a cycle")
        return tuple(order)

    def with_arc(self, p: str, c: str) -> "Dag":
        return replace(self, arcs=self.arcs | {(p, c)})

    def without_arc(self, p: str, c: str) -> "Dag":
        if (p, c) not in self.arcs:
            raise ArcNotInGraph(f"{p}->{c}")
        return replace(self, arcs=self.arcs - {(p, c)})

    def sorted_arcs(self) -> tuple[tuple[str, str], ...]:
        return tuple(sorted(self.arcs))


@dataclass(frozen=True)
class ScoreConfig:
    penalty: float = 2.0
    alpha: float = 0.0  # score-time smoothing; 0 = pure MLE

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


@dataclass
class FitReport:
    loglik: float
    n_params: int
    aic: float
    node_scores: dict[str, float] = field(default_factory=dict)
    node_params: dict[str, int] = field(default_factory=dict)


def _family_counts(data: CategoricalData, child: str, parents: Sequence[str]):
    child_card = data.cardinality(child)
    idx, size = data.parent_config_index(parents)
    flat = idx * child_card + data.column(child)
    counts = np.bincount(flat, weights=data.weights, minlength=size * child_card)
    return counts.reshape(size, child_card)


def family_score(
    data: CategoricalData, child: str, parents: Sequence[str], config: ScoreConfig
) -> tuple[float, int]:
    """Weighted log-likelihood and parameter count of one node family."""
    counts = _family_counts(data, child, parents)
    child_card = counts.shape[1]
    row_tot = counts.sum(axis=1, keepdims=True)
    if config.alpha > 0:
        probs = (counts + config.alpha) / (row_tot + config.alpha * child_card)
        mask = counts > 0
        ll = float((counts[mask] * np.log(probs[mask])).sum())
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = np.log(counts / row_tot)
        mask = counts > 0
        ll = float((counts[mask] * logp[mask]).sum())
    n_params = (child_card - 1) * counts.shape[0]
    return ll, n_params


class _FamilyCache:
    def __init__(self, data: CategoricalData, config: ScoreConfig):
        self.data = data
        self.config = config
        self._cache: dict[tuple[str, tuple[str, ...]], tuple[float, int]] = {}

    def get(self, child: str, parents: Sequence[str]) -> tuple[float, int]:
        key = (child, tuple(sorted(parents)))
        if key not in self._cache:
            self._cache[key] = family_score(self.data, child, key[1], self.config)
        return self._cache[key]

    def aic(self, child: str, parents: Sequence[str]) -> float:
        ll, k = self.get(child, parents)
        return ll - self.config.penalty * k


def score(dag: Dag, data: CategoricalData, config: ScoreConfig = ScoreConfig()) -> FitReport:
    """Network score: sum of per-node family scores (decomposable)."""
    _check_dag_data(dag, data)
    cache = _FamilyCache(data, config)
    node_scores, node_params = {}, {}
    loglik = 0.0
    n_params = 0
    for node in dag.nodes:
        ll, k = cache.get(node, dag.parents(node))
        node_scores[node] = ll - config.penalty * k
        node_params[node] = k
        loglik += ll
        n_params += k
    return FitReport(loglik, n_params, loglik - config.penalty * n_params,
                     node_scores, node_params)


def _check_dag_data(dag: Dag, data: CategoricalData):
    if set(dag.nodes) != set(data.variables):
        raise LevelMismatch("dag nodes and data variables differ")
    for node in dag.nodes:
        if dag.levels[node] != data.levels[node]:
            raise LevelMismatch(f"level set of {node} differs between dag and data")


@dataclass(frozen=True)
class Constraints:
    forced: frozenset[tuple[str, str]] = frozenset()
    forbidden: frozenset[tuple[str, str]] = frozenset()

    @classmethod
    def from_json(cls, path: str | Path) -> "Constraints":
        raw = json.loads(Path(path).read_text())
        return cls(
            frozenset(tuple(a) for a in raw.get("forced", [])),
            frozenset(tuple(a) for a in raw.get("forbidden", [])),
        )

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(
                {"forced": sorted(map(list, self.forced)),
                 "forbidden": sorted(map(list, self.forbidden))},
                indent=2,
            )
            + "\n"
        )


def _validate_constraints(nodes, levels, constraints: Constraints) -> Dag:
    overlap = constraints.forced & constraints.forbidden
    if overlap:
        raise InfeasibleConstraints(f"arcs both forced and forbidden: {sorted(overlap)}")
    try:
        return Dag(tuple(nodes), dict(levels), frozenset(constraints.forced))
    except (CycleError, ValueError) as exc:
        raise InfeasibleConstraints(str(exc)) from exc


def _candidate_moves(dag: Dag, constraints: Constraints):
    """Deterministic operator enumeration: (kind, parent, child) sorted."""
    moves = []
    nodes = dag.nodes
    for p in nodes:
        for c in nodes:
            if p == c:
                continue
            if (p, c) in dag.arcs:
                if (p, c) not in constraints.forced:
                    moves.append(("delete", p, c))
                    if (c, p) not in constraints.forbidden and not dag.has_path(
                        p, c, skip_arc=(p, c)
                    ):
                        moves.append(("reverse", p, c))
            else:
                if (p, c) not in constraints.forbidden and not dag.has_path(c, p):
                    moves.append(("add", p, c))
    return sorted(moves)


def _move_delta(move, dag: Dag, cache: _FamilyCache) -> float:
    kind, p, c = move
    parents_c = dag.parents(c)
    if kind == "add":
        return cache.aic(c, parents_c + (p,)) - cache.aic(c, parents_c)
    if kind == "delete":
        reduced = tuple(x for x in parents_c if x != p)
        return cache.aic(c, reduced) - cache.aic(c, parents_c)
    reduced = tuple(x for x in parents_c if x != p)
    parents_p = dag.parents(p)
    return (
        cache.aic(c, reduced)
        - cache.aic(c, parents_c)
        + cache.aic(p, parents_p + (c,))
        - cache.aic(p, parents_p)
    )


def _apply_move(move, dag: Dag) -> Dag:
    kind, p, c = move
    if kind == "add":
        return dag.with_arc(p, c)
    if kind == "delete":
        return dag.without_arc(p, c)
    return dag.without_arc(p, c).with_arc(c, p)


def _climb_from(dag: Dag, cache: _FamilyCache, constraints: Constraints, max_iter: int) -> Dag:
    for _ in range(max_iter):
        best_delta, best_move = 0.0, None
        for move in _candidate_moves(dag, constraints):
            delta = _move_delta(move, dag, cache)
            if delta > best_delta + 1e-12:
                best_delta, best_move = delta, move
        if best_move is None:
            return dag
        dag = _apply_move(best_move, dag)
    logger.warning("hill climb hit the iteration cap (%d)", max_iter)
    return dag


def _random_start(nodes, levels, constraints: Constraints, rng) -> Dag:
    order = list(rng.permutation(len(nodes)))
    dag = _validate_constraints(nodes, levels, constraints)
    for i_pos, i in enumerate(order):
        for j in order[i_pos + 1:]:
            p, c = nodes[i], nodes[j]
            if (p, c) in constraints.forbidden or (p, c) in dag.arcs:
                continue
            if rng.random() < 0.15 and not dag.has_path(c, p):
                dag = dag.with_arc(p, c)
    return dag


def hill_climb(
    data: CategoricalData,
    config: ScoreConfig = ScoreConfig(),
    constraints: Constraints | None = None,
    seed=None,
    restarts: int = 0,
    max_iter: int | None = None,
) -> tuple[Dag, FitReport]:
    """Greedy structure search maximizing the penalized score.

    At each step the operator (add/delete/reverse) with the largest strict
    score increase is applied; ties resolve lexicographically by
    (kind, parent, child). Forced arcs are never removed or reversed,
    forbidden arcs never added. Optional seeded random restarts keep the
    best-scoring local optimum.
    """
    constraints = constraints or Constraints()
    cache = _FamilyCache(data, config)
    if max_iter is None:
        max_iter = 4 * len(data.variables) ** 2 + 16
    start = _validate_constraints(data.variables, data.levels, constraints)
    best = _climb_from(start, cache, constraints, max_iter)
    best_aic = sum(cache.aic(n, best.parents(n)) for n in best.nodes)
    if restarts > 0:
        rng = np.random.default_rng(seed)
        for _ in range(restarts):
            dag = _random_start(data.variables, data.levels, constraints, rng)
            dag = _climb_from(dag, cache, constraints, max_iter)
            aic = sum(cache.aic(n, dag.parents(n)) for n in dag.nodes)
            if aic > best_aic + 1e-12:
                best, best_aic = dag, aic
    return best, score(best, data, config)


def arc_strength(
    dag: Dag, data: CategoricalData, config: ScoreConfig = ScoreConfig()
) -> dict[tuple[str, str], float]:
    """Score change from removing each arc; more negative = stronger."""
    _check_dag_data(dag, data)
    cache = _FamilyCache(data, config)
    out = {}
    for p, c in dag.sorted_arcs():
        parents_c = dag.parents(c)
        reduced = tuple(x for x in parents_c if x != p)
        out[(p, c)] = cache.aic(c, reduced) - cache.aic(c, parents_c)
    return out


def strength_of(dag: Dag, data: CategoricalData, arc: tuple[str, str],
                config: ScoreConfig = ScoreConfig()) -> float:
    if arc not in dag.arcs:
        raise ArcNotInGraph(f"{arc[0]}->{arc[1]}")
    return arc_strength(dag, data, config)[arc]


@dataclass
class Cpt:
    """Conditional probability table of one node."""

    node: str
    parents: tuple[str, ...]
    parent_cards: tuple[int, ...]
    probs: np.ndarray  # (prod parent cards, node levels)
    uniform_rows: tuple[int, ...] = ()

    def row_index(self, parent_codes: Sequence[int]) -> int:
        idx = 0
        for card, code in zip(self.parent_cards, parent_codes):
            idx = idx * card + code
        return idx


@dataclass
class BayesNet:
    dag: Dag
    cpts: dict[str, Cpt]
    fit: FitReport | None = None
    data_total_weight: float = 0.0

    def node_levels(self, node: str) -> tuple[str, ...]:
        return self.dag.levels[node]


def fit_parameters(
    dag: Dag, data: CategoricalData, smoothing_alpha: float = 1e-3
) -> BayesNet:
    """Weighted CPT estimation: (count + alpha) / (total + alpha * levels).

    With alpha = 0, parent configurations that never occur get a uniform
    row and are flagged in Cpt.uniform_rows.
    """
    _check_dag_data(dag, data)
    cpts = {}
    for node in dag.nodes:
        parents = dag.parents(node)
        counts = _family_counts(data, node, parents)
        card = counts.shape[1]
        row_tot = counts.sum(axis=1, keepdims=True)
        uniform = ()
        if smoothing_alpha > 0:
            probs = (counts + smoothing_alpha) / (row_tot + smoothing_alpha * card)
        else:
            empty = row_tot[:, 0] == 0
            safe_tot = np.where(empty[:, None], 1.0, row_tot)
            probs = counts / safe_tot
            probs[empty] = 1.0 / card
            uniform = tuple(int(i) for i in np.flatnonzero(empty))
            if uniform:
                logger.warning(
                    "node %s: %d unobserved parent configurations set to uniform",
                    node, len(uniform),
                )
        cpts[node] = Cpt(
            node, parents, tuple(data.cardinality(p) for p in parents), probs, uniform
        )
    return BayesNet(dag, cpts, None, data.total_weight)


def joint_probability(net: BayesNet, assignment: Mapping[str, str]) -> float:
    """Product of CPT lookups over a full assignment."""
    missing = [n for n in net.dag.nodes if n not in assignment]
    if missing:
        raise IncompleteAssignment(f"assignment misses {missing}")
    codes = {}
    for node in net.dag.nodes:
        levels = net.dag.levels[node]
        try:
            codes[node] = levels.index(assignment[node])
        except ValueError:
            raise LevelMismatch(f"{assignment[node]!r} is not a level of {node}") from None
    prob = 1.0
    for node in net.dag.nodes:
        cpt = net.cpts[node]
        row = cpt.row_index([codes[p] for p in cpt.parents])
        prob *= float(cpt.probs[row, codes[node]])
    return prob


def log_likelihood(net: BayesNet, data: CategoricalData) -> float:
    """Weighted log-likelihood of data under an already-fitted network."""
    _check_dag_data(net.dag, data)
    total = np.zeros(data.n)
    for node in net.dag.nodes:
        cpt = net.cpts[node]
        idx, _ = data.parent_config_index(cpt.parents)
        p = cpt.probs[idx, data.column(node)]
        if (p <= 0).any():
            bad = int(np.flatnonzero(p <= 0)[0])
            raise ZeroProbabilityRecord(f"record {bad} has zero probability at node {node}")
        total += np.log(p)
    return float(data.weights @ total)


# -- persistence -----------------------------------------------------------


def net_to_json(net: BayesNet, path: str | Path) -> None:
    levels_of = net.dag.levels
    doc = {
        "nodes": [{"name": n, "levels": list(levels_of[n])} for n in net.dag.nodes],
        "arcs": [list(a) for a in net.dag.sorted_arcs()],
        "cpts": {},
        "fit": None,
        "data_total_weight": net.data_total_weight,
    }
    for node in net.dag.nodes:
        cpt = net.cpts[node]
        rows = []
        for r in range(cpt.probs.shape[0]):
            combo = []
            rem = r
            for card in reversed(cpt.parent_cards):
                combo.append(rem % card)
                rem //= card
            combo = list(reversed(combo))
            config_levels = [levels_of[p][c] for p, c in zip(cpt.parents, combo)]
            rows.append([config_levels, [float(x) for x in cpt.probs[r]]])
        doc["cpts"][node] = {"parents": list(cpt.parents), "rows": rows,
                             "uniform_rows": list(cpt.uniform_rows)}
    if net.fit is not None:
        doc["fit"] = {"loglik": net.fit.loglik, "k": net.fit.n_params, "aic": net.fit.aic}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def net_from_json(path: str | Path) -> BayesNet:
    doc = json.loads(Path(path).read_text())
    nodes = tuple(d["name"] for d in doc["nodes"])
    levels = {d["name"]: tuple(d["levels"]) for d in doc["nodes"]}
    dag = Dag(nodes, levels, frozenset(tuple(a) for a in doc["arcs"]))
    cpts = {}
    for node in nodes:
        entry = doc["cpts"][node]
        parents = tuple(entry["parents"])
        cards = tuple(len(levels[p]) for p in parents)
        size = int(np.prod(cards)) if cards else 1
        probs = np.empty((size, len(levels[node])))
        for r, (_, row) in enumerate(entry["rows"]):
            probs[r] = row
        cpts[node] = Cpt(node, parents, cards, probs, tuple(entry.get("uniform_rows", [])))
    fit = None
    if doc.get("fit"):
        fit = FitReport(doc["fit"]["loglik"], doc["fit"]["k"], doc["fit"]["aic"])
    return BayesNet(dag, cpts, fit, float(doc.get("data_total_weight", 0.0)))


def to_dot(
    dag: Dag,
    strengths: Mapping[tuple[str, str], float] | None = None,
    weak_threshold: float = 0.0,
    forced: Iterable[tuple[str, str]] = (),
) -> str:
    """Graphviz text; weak arcs (strength above threshold) are dashed."""
    forced = set(forced)
    lines = ["digraph crashnet {"]
    for node in sorted(dag.nodes):
        lines.append(f'  "{node}";')
    for p, c in dag.sorted_arcs():
        attrs = []
        if strengths is not None and (p, c) in strengths:
            value = strengths[(p, c)]
            attrs.append(f'label="{value:.1f}"')
            if value > weak_threshold:
                attrs.append("style=dashed")
        if (p, c) in forced:
            attrs.append("color=gray40")
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f'  "{p}" -> "{c}"{suffix};')
    lines.append("}")
    return "\n".join(lines) + "\n"


def structural_stability(
    data: CategoricalData,
    full_dag: Dag,
    subsets: Sequence[Sequence[str]],
    config: ScoreConfig = ScoreConfig(),
    constraints: Constraints | None = None,
) -> list[dict]:
    """Re-learn on variable subsets and report the arc-set differences.

    A report, not a gate: each entry compares the subnetwork learned from
    the subset columns with the full network restricted to those columns.
    """
    out = []
    for subset in subsets:
        subset = tuple(subset)
        cols = [data.variables.index(v) for v in subset]
        sub_data = CategoricalData(
            subset, {v: data.levels[v] for v in subset}, data.codes[:, cols], data.weights
        )
        sub_constraints = None
        if constraints is not None:
            keep = set(subset)
            sub_constraints = Constraints(
                frozenset(a for a in constraints.forced if a[0] in keep and a[1] in keep),
                frozenset(a for a in constraints.forbidden if a[0] in keep and a[1] in keep),
            )
        sub_dag, _ = hill_climb(sub_data, config, sub_constraints)
        restricted = {
            (p, c) for p, c in full_dag.arcs if p in set(subset) and c in set(subset)
        }
        learned = set(sub_dag.arcs)
        out.append(
            {
                "subset": list(subset),
                "full_restricted": sorted(map(list, restricted)),
                "subnet": sorted(map(list, learned)),
                "added": sorted(map(list, learned - restricted)),
                "removed": sorted(map(list, restricted - learned)),
            }
        )
    return out

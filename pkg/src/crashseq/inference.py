"""Replicated Monte-Carlo conditional queries against a fitted network.

Each query runs R independent replications. A replication draws N
particles by sampling every non-evidence node forward in topological
order and weighting each particle by the probability of the evidence
under its sampled parents (likelihood weighting). With empty evidence the
particle stream is bit-identical to plain forward sampling. Counts are
reported under two conventions: joint counts, P(level, evidence) x scale,
which sum to the evidence subpopulation, and conditional counts,
P(level | evidence) x scale.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from crashseq.bayesnet import BayesNet, LevelMismatch

logger = logging.getLogger(__name__)


class ZeroEvidenceProbability(Exception):
    """Every particle weight was zero in all replications."""


@dataclass(frozen=True)
class Query:
    evidence: dict[str, str] = field(default_factory=dict)
    targets: tuple[str, ...] = ()
    replications: int = 1000
    samples: int = 10000
    scale: float | None = None
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if not 1 <= len(self.targets) <= 2:
            raise ValueError("queries take one or two target nodes")
        if set(self.targets) & set(self.evidence):
            raise ValueError("evidence nodes cannot also be targets")
        if self.replications < 1 or self.samples < 1:
            raise ValueError("replications and samples must be >= 1")


@dataclass
class QueryResult:
    query: Query
    levels: tuple  # level strings, or (level, level) pairs for two targets
    mean_joint_count: np.ndarray
    sd_joint_count: np.ndarray
    mean_cond_count: np.ndarray
    sd_cond_count: np.ndarray
    cond_prob: np.ndarray
    ess: float
    dropped_replications: int
    scale: float

    def crosstab(self):
        """Two-target results as (row levels, col levels, mean joint counts)."""
        if len(self.query.targets) != 2:
            raise ValueError("crosstab needs a two-target query")
        rows = tuple(dict.fromkeys(lv[0] for lv in self.levels))
        cols = tuple(dict.fromkeys(lv[1] for lv in self.levels))
        grid = np.zeros((len(rows), len(cols)))
        lookup = {lv: i for i, lv in enumerate(self.levels)}
        for i, r in enumerate(rows):
            for j, c in enumerate(cols):
                grid[i, j] = self.mean_joint_count[lookup[(r, c)]]
        return rows, cols, grid


def _validate_levels(net: BayesNet, mapping: Mapping[str, str]):
    for node, level in mapping.items():
        if node not in net.dag.levels:
            raise LevelMismatch(f"unknown node {node!r}")
        if level not in net.dag.levels[node]:
            raise LevelMismatch(f"{level!r} is not a level of {node}")


def _weighted_particles(net: BayesNet, evidence_codes: Mapping[str, int], n: int, rng):
    """Sample non-evidence nodes forward; weight by evidence likelihood."""
    order = net.dag.topological_order()
    node_pos = {node: i for i, node in enumerate(net.dag.nodes)}
    codes = np.empty((n, len(net.dag.nodes)), dtype=np.int64)
    weights = np.ones(n)
    for node in order:
        cpt = net.cpts[node]
        if cpt.parents:
            row = np.zeros(n, dtype=np.int64)
            for p in cpt.parents:
                row = row * len(net.dag.levels[p]) + codes[:, node_pos[p]]
            probs = cpt.probs[row]
        else:
            probs = np.broadcast_to(cpt.probs[0], (n, cpt.probs.shape[1]))
        if node in evidence_codes:
            codes[:, node_pos[node]] = evidence_codes[node]
            weights = weights * probs[:, evidence_codes[node]]
        else:
            u = rng.random(n)
            cdf = np.cumsum(probs, axis=1)
            codes[:, node_pos[node]] = np.minimum(
                (u[:, None] > cdf).sum(axis=1), cpt.probs.shape[1] - 1
            )
    return codes, weights


def _replication_rng(seed: int, replication: int):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(replication,))
    return np.random.default_rng(ss)


def sample_forward(net: BayesNet, n: int, seed: int = 0) -> np.ndarray:
    """n full assignments by ancestral sampling; columns follow net.dag.nodes."""
    codes, _ = _weighted_particles(net, {}, n, _replication_rng(seed, 0))
    return codes


def query(net: BayesNet, q: Query) -> QueryResult:
    """Estimate the target distribution given evidence, R times over."""
    _validate_levels(net, q.evidence)
    for t in q.targets:
        if t not in net.dag.levels:
            raise LevelMismatch(f"unknown target node {t!r}")
    scale = q.scale if q.scale is not None else (net.data_total_weight or 1.0)
    evidence_codes = {
        node: net.dag.levels[node].index(level) for node, level in q.evidence.items()
    }
    node_pos = {node: i for i, node in enumerate(net.dag.nodes)}
    if len(q.targets) == 1:
        levels = tuple(net.dag.levels[q.targets[0]])
        n_cells = len(levels)
    else:
        la = net.dag.levels[q.targets[0]]
        lb = net.dag.levels[q.targets[1]]
        levels = tuple((a, b) for a in la for b in lb)
        n_cells = len(levels)

    joint_rows, cond_rows, ess_values = [], [], []
    dropped = 0
    for r in range(q.replications):
        rng = _replication_rng(q.seed, r)
        codes, weights = _weighted_particles(net, evidence_codes, q.samples, rng)
        wsum = float(weights.sum())
        if wsum <= 0.0:
            dropped += 1
            continue
        if len(q.targets) == 1:
            cell = codes[:, node_pos[q.targets[0]]]
        else:
            nb = len(net.dag.levels[q.targets[1]])
            cell = codes[:, node_pos[q.targets[0]]] * nb + codes[:, node_pos[q.targets[1]]]
        mass = np.bincount(cell, weights=weights, minlength=n_cells)
        joint_rows.append(mass / q.samples * scale)
        cond_rows.append(mass / wsum * scale)
        ess_values.append(wsum * wsum / float(weights @ weights))
    if not joint_rows:
        raise ZeroEvidenceProbability(
            f"evidence {q.evidence} had zero weight in all {q.replications} replications"
        )
    if dropped:
        logger.warning("query dropped %d/%d zero-weight replications", dropped, q.replications)
    joint = np.vstack(joint_rows)
    cond = np.vstack(cond_rows)
    ddof = 1 if joint.shape[0] > 1 else 0
    return QueryResult(
        query=q,
        levels=levels,
        mean_joint_count=joint.mean(axis=0),
        sd_joint_count=joint.std(axis=0, ddof=ddof),
        mean_cond_count=cond.mean(axis=0),
        sd_cond_count=cond.std(axis=0, ddof=ddof),
        cond_prob=cond.mean(axis=0) / scale,
        ess=float(np.mean(ess_values)),
        dropped_replications=dropped,
        scale=scale,
    )


def load_queries(path: str | Path, default_r: int = 1000, default_n: int = 10000,
                 seed: int = 0) -> list[Query]:
    """Query file: JSON list of {evidence, targets, R, N, scale?, name?}."""
    raw = json.loads(Path(path).read_text())
    out = []
    for i, entry in enumerate(raw):
        out.append(
            Query(
                evidence=dict(entry.get("evidence", {})),
                targets=tuple(entry["targets"]),
                replications=int(entry.get("R", default_r)),
                samples=int(entry.get("N", default_n)),
                scale=entry.get("scale"),
                seed=int(entry.get("seed", seed)),
                name=entry.get("name", f"query{i}"),
            )
        )
    return out


def make_default_queries(net: BayesNet, replications: int, samples: int, seed: int) -> list[Query]:
    """Demo queries mirroring the published workflow, adapted to the data.

    Falls back gracefully when a referenced node or level is absent.
    """
    queries = []
    levels = net.dag.levels

    def has(node, level=None):
        return node in levels and (level is None or level in levels[node])

    if has("maxsev", "Fatal") and has("seqtype"):
        queries.append(
            Query({"maxsev": "Fatal"}, ("seqtype",), replications, samples,
                  seed=seed, name="seqtype_given_fatal")
        )
    if has("seqtype") and has("typint") and has("tcd"):
        # condition on the heaviest sequence type
        marginal = net.cpts["seqtype"]
        if not marginal.parents:
            top = levels["seqtype"][int(np.argmax(marginal.probs[0]))]
        else:
            top = levels["seqtype"][0]
        queries.append(
            Query({"seqtype": top}, ("typint", "tcd"), replications, samples,
                  seed=seed + 1, name=f"odd_given_{top}")
        )
    if has("tcd", "Signal+Signal") and has("seqtype") and has("typint"):
        queries.append(
            Query({"tcd": "Signal+Signal"}, ("seqtype", "typint"), replications, samples,
                  seed=seed + 2, name="seqtype_at_signals")
        )
    return queries


# -- report rendering -------------------------------------------------------


def result_rows(result: QueryResult) -> list[dict]:
    rows = []
    for i, lv in enumerate(result.levels):
        label = lv if isinstance(lv, str) else "|".join(lv)
        rows.append(
            {
                "level": label,
                "mean_joint_count": float(result.mean_joint_count[i]),
                "sd_joint_count": float(result.sd_joint_count[i]),
                "mean_cond_count": float(result.mean_cond_count[i]),
                "sd_cond_count": float(result.sd_cond_count[i]),
                "cond_prob": float(result.cond_prob[i]),
            }
        )
    return rows


def result_to_csv(result: QueryResult) -> str:
    header = "level,mean_joint_count,sd_joint_count,mean_cond_count,sd_cond_count,cond_prob"
    lines = [header]
    for row in result_rows(result):
        lines.append(
            ",".join(
                [
                    row["level"],
                    repr(row["mean_joint_count"]),
                    repr(row["sd_joint_count"]),
                    repr(row["mean_cond_count"]),
                    repr(row["sd_cond_count"]),
                    repr(row["cond_prob"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def crosstab_to_csv(result: QueryResult) -> str:
    rows, cols, grid = result.crosstab()
    lines = [result.query.targets[0] + "\\" + result.query.targets[1] + "," + ",".join(cols)]
    for i, r in enumerate(rows):
        lines.append(r + "," + ",".join(repr(float(v)) for v in grid[i]))
    return "\n".join(lines) + "\n"


def bar_chart_svg(result: QueryResult, width: int = 640, height: int = 360) -> str:
    """Deterministic SVG bar chart for a single-target query."""
    if len(result.query.targets) != 1:
        raise ValueError("bar chart needs a single-target query")
    values = result.mean_joint_count
    peak = float(values.max()) if values.size and values.max() > 0 else 1.0
    margin, label_h = 40, 70
    plot_w, plot_h = width - 2 * margin, height - margin - label_h
    bar_w = plot_w / max(len(values), 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">'
        f"{result.query.name or 'query'}: mean counts over "
        f"{result.query.replications} replications</text>",
    ]
    for i, lv in enumerate(result.levels):
        h = float(values[i]) / peak * plot_h
        x = margin + i * bar_w
        y = margin + plot_h - h
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w * 0.85:.2f}" height="{h:.2f}" '
            'fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{x + bar_w * 0.42:.2f}" y="{margin + plot_h + 12:.2f}" '
            f'font-size="9" text-anchor="end" transform="rotate(-60 {x + bar_w * 0.42:.2f} '
            f'{margin + plot_h + 12:.2f})">{lv}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scenario_lines(result: QueryResult, top: int = 3) -> list[str]:
    """Prose summary lines for the report, one per leading cell."""
    order = np.argsort(-result.mean_joint_count, kind="stable")[:top]
    ev = ", ".join(f"{k}={v}" for k, v in sorted(result.query.evidence.items())) or "no evidence"
    lines = []
    for pos in order:
        lv = result.levels[pos]
        if isinstance(lv, str):
            what = f"{result.query.targets[0]}={lv}"
        else:
            what = f"{result.query.targets[0]}={lv[0]} with {result.query.targets[1]}={lv[1]}"
        lines.append(
            f"Given {ev}: {what} (mean count {result.mean_joint_count[pos]:.1f}, "
            f"share {100 * result.cond_prob[pos]:.1f}%)"
        )
    return lines


def scenario_report(net: BayesNet, results: Sequence[QueryResult]) -> str:
    """Markdown report over a batch of query results."""
    lines = ["# Scenario specification report", ""]
    if not results:
        lines.append("No queries were run.")
        return "\n".join(lines) + "\n"
    lines.append(f"Population scale: {results[0].scale!r} (weighted crash count)")
    for result in results:
        q = result.query
        ev = ", ".join(f"{k}={v}" for k, v in sorted(q.evidence.items())) or "(none)"
        lines.extend(
            [
                "",
                f"## {q.name or ' x '.join(q.targets)}",
                "",
                f"- targets: {', '.join(q.targets)}",
                f"- evidence: {ev}",
                f"- replications: {q.replications}, samples per replication: {q.samples}",
                f"- effective sample size (mean): {result.ess:.0f}",
                f"- dropped zero-weight replications: {result.dropped_replications}",
                "",
                "Top cells:",
            ]
        )
        lines.extend(f"- {line}" for line in scenario_lines(result))
    return "\n".join(lines) + "\n"

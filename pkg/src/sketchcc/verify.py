"""Co-run the sketch engine and the exact oracle and compare partitions."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .buffering import BufferConfig
from .graph_engine import GraphParams, GraphSketch, SpanningForestResult
from .ingest import Ingestor
from .streamio import AdjacencyOracle, EdgeStream, canonical_partition


@dataclass
class CheckResult:
    position: int
    ok: bool
    components: int
    oracle_components: int
    forest_edges: int
    rounds_used: int
    exhausted: bool
    seconds: float
    unsound_edges: list = field(default_factory=list)
    differing: list = field(default_factory=list)


@dataclass
class VerifyReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(not c.ok for c in self.checks)

    @property
    def ok(self) -> bool:
        return self.failures == 0

    def extend(self, other: VerifyReport) -> None:
        self.checks.extend(other.checks)


def compare(result: SpanningForestResult, oracle: AdjacencyOracle, position: int = 0,
            seconds: float = 0.0) -> CheckResult:
    """Check partition equality and that every forest edge is present."""
    mine = canonical_partition(result.partition)
    truth = canonical_partition(oracle.components())
    unsound = [e for e in result.edges if not oracle.has_edge(*e)]
    same = bool(np.array_equal(mine, truth))
    differing = []
    if not same:
        for node in np.flatnonzero(mine != truth).tolist()[:20]:
            differing.append((node, int(mine[node]), int(truth[node])))
    return CheckResult(position, same and not unsound, len(set(mine.tolist())),
                       len(set(truth.tolist())), len(result.edges), result.rounds_used,
                       result.exhausted, seconds, unsound, differing)


def check_points(length: int, checks: int) -> list[int]:
    if checks < 1:
        raise ValueError("checks must be >= 1")
    return sorted({max(1, round(length * (i + 1) / checks)) for i in range(checks)}) if length else [0]


def verify_stream(stream: EdgeStream, params: GraphParams, config: BufferConfig | None = None,
                  checks: int = 1) -> VerifyReport:
    """Ingest ``stream`` and compare against the oracle at ``checks`` evenly spaced points."""
    if params.num_nodes != stream.num_nodes:
        raise ValueError("node count mismatch between params and stream")
    graph = GraphSketch(params)
    oracle = AdjacencyOracle(stream.num_nodes)
    report = VerifyReport()
    done = 0
    with Ingestor(graph, config) as ing:
        for stop in check_points(len(stream), checks):
            part = stream[done:stop]
            ing.ingest(part)
            oracle.apply_stream(part)
            done = stop
            start = time.perf_counter()
            ing.flush()
            result = graph.spanning_forest()
            report.checks.append(compare(result, oracle, stop, time.perf_counter() - start))
    return report


def verify_snapshot(graph: GraphSketch, stream: EdgeStream) -> CheckResult:
    """Compare a stored snapshot with an oracle replay of the full stream."""
    oracle = AdjacencyOracle(stream.num_nodes)
    oracle.apply_stream(stream)
    start = time.perf_counter()
    result = graph.spanning_forest()
    return compare(result, oracle, len(stream), time.perf_counter() - start)

"""Streaming connected components over per-node CubeSketch l0-samplers."""

from .buffering import BufferConfig, BufferMode, GutterTree, LeafGutters, UpdateBatch, WorkQueue, gutter_capacity
from .cubesketch import CubeSketch, SampleKind, SampleResult, SketchParams
from .graph_engine import (
    DisjointSetUnion,
    GraphParams,
    GraphSketch,
    SpanningForestResult,
    edge_decode,
    edge_encode,
    node_sketch_bytes,
)
from .hashing import HashSeed, Purpose
from .ingest import Ingestor, ingest_stream
from .standard_l0 import StandardL0Sketch, StdParams, WordRegime
from .streamio import AdjacencyOracle, EdgeStream, StreamUpdate, generate_dense_graph, synthesize_stream

__all__ = [
    "AdjacencyOracle", "BufferConfig", "BufferMode", "CubeSketch", "DisjointSetUnion",
    "EdgeStream", "GraphParams", "GraphSketch", "GutterTree", "HashSeed", "Ingestor",
    "LeafGutters", "Purpose", "SampleKind", "SampleResult", "SketchParams",
    "SpanningForestResult", "StandardL0Sketch", "StdParams", "StreamUpdate", "UpdateBatch",
    "WordRegime", "WorkQueue", "edge_decode", "edge_encode", "generate_dense_graph",
    "gutter_capacity", "ingest_stream", "node_sketch_bytes", "synthesize_stream",
]

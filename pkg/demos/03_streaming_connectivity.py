"""
Connected components of a graph stream
=======================================

Every node keeps one CubeSketch per Boruvka round over the space of all
possible edges. Inserting or deleting edge {u, v} toggles the same slot in
the sketches of u and v. Summing the sketches of a set of nodes leaves
exactly the edges that cross out of the set, which is what Boruvka needs.
"""

import numpy as np

from sketchcc import AdjacencyOracle, GraphParams, GraphSketch
from sketchcc.streamio import canonical_partition, generate_dense_graph, synthesize_stream

V = 256

# %%
# Build a dense graph, isolate five nodes, and turn it into a stream that
# inserts and deletes edges many times over.
edges = generate_dense_graph(V, 0.3, seed=1)
stream, isolated = synthesize_stream(edges, V, seed=2, churn=1.0, disconnect_count=5)
print(f"{len(edges)} edges, {len(stream)} updates, isolated nodes {isolated.tolist()}")

# %%
# Apply the stream directly to the node sketches.
graph = GraphSketch(GraphParams(V, master_seed=3))
graph.apply_stream(stream.us, stream.vs)
mib = graph.alpha.nbytes / 2**20 + graph.gamma.nbytes / 2**20
print(f"sketch memory {mib:.1f} MiB for {V} nodes")

# %%
# Recover a spanning forest. The query runs on a copy, so the sketches can
# keep absorbing updates afterwards.
result = graph.spanning_forest()
print(f"components={result.num_components} forest edges={len(result.edges)} "
      f"rounds used={result.rounds_used}")
for row in result.round_stats:
    print("   ", row)

# %%
# Check against an exact adjacency matrix.
oracle = AdjacencyOracle(V)
oracle.apply_stream(stream)
same = np.array_equal(canonical_partition(result.partition), oracle.components())
print("matches exact partition:", same)

# %%
# Cut one node off by deleting its remaining edges, then ask again.
node = int(np.setdiff1d(np.arange(V), isolated)[0])
nbrs = [v for v in range(V) if v != node and oracle.has_edge(node, v)]
graph.apply_stream([node] * len(nbrs), nbrs)
print("components after removing node", node, "->", graph.spanning_forest().num_components)

"""
Stream files, text streams and the exact oracle
===============================================

Streams are stored as a 24-byte header followed by 9-byte records. A text
form with one ``I u v`` or ``D u v`` line per update is handy for small
hand-written cases and for converting edge lists from elsewhere.
"""

import os
import tempfile

from sketchcc.streamio import (
    AdjacencyOracle,
    EdgeStream,
    StreamReader,
    read_text,
    stream_write,
    synthesize_stream,
    validate_stream,
    write_text,
)

tmp = tempfile.mkdtemp()

# %%
# A tiny stream: a triangle, one edge removed again.
path = os.path.join(tmp, "tiny.txt")
with open(path, "w") as fh:
    fh.write("4 4\nI 0 1\nI 1 2\nI 2 0\nD 1 0\n")
tiny = read_text(path)
oracle = AdjacencyOracle(4)
oracle.apply_stream(tiny)
print("edges:", oracle.edges().tolist(), "labels:", oracle.components().tolist())

# %%
# An invalid stream is caught with the position of the offending update.
bad = EdgeStream(4, [0, 0], [0, 1], [1, 0])  # inserts (0, 1) twice
print("first invalid update at position", validate_stream(bad))

# %%
# Synthesize a stream from an edge list and store it in binary form.
edges = [(0, 1), (1, 2), (3, 4), (4, 5), (5, 3)]
stream, _ = synthesize_stream(edges, 8, seed=1, churn=2.0)
binary = os.path.join(tmp, "s.bin")
stream_write(binary, stream)
write_text(os.path.join(tmp, "s.txt"), stream)
print(f"{len(stream)} updates, {os.path.getsize(binary)} bytes on disk")

# %%
# Reading is chunked, so files larger than memory are fine.
reader = StreamReader(binary)
oracle = AdjacencyOracle(reader.num_nodes)
for chunk in reader.chunks(4):
    oracle.apply_stream(chunk)
print("final edges:", oracle.edges().tolist())

"""
CubeSketch against a general-purpose l0 sampler
================================================

The general sampler keeps three integers per bucket and needs a modular
exponentiation per update to maintain its checksum. CubeSketch keeps an XOR
of indices and an XOR of 32-bit hashes. This script compares both on speed
and size, then writes a small CSV and (if matplotlib is present) a plot.
"""

import sys

from sketchcc.bench import L0_FIELDS, bench_l0, plot_l0, write_csv

lengths = [10**3, 10**6, 10**9, 10**12]
duration = float(sys.argv[1]) if len(sys.argv) > 1 else 0.5

# %%
# Each length gets a short timed run for both samplers. Past 2**32 the
# general sampler switches to 128-bit words, which doubles its size again.
rows = bench_l0(lengths, duration)
for n in lengths:
    cube, std = [r for r in rows if r.vector_length == n]
    print(f"n={n:>14}  cube {cube.updates_per_sec:12.0f}/s {cube.payload_bytes:6d} B   "
          f"general {std.updates_per_sec:10.0f}/s {std.payload_bytes:6d} B   "
          f"speedup {cube.updates_per_sec / std.updates_per_sec:6.1f}x  "
          f"size {std.payload_bytes / cube.payload_bytes:.1f}x")

# %%
# Keep the numbers around for later.
write_csv("l0_comparison.csv", rows, L0_FIELDS)
try:
    plot_l0(rows, "l0_comparison.png")
    print("wrote l0_comparison.csv and l0_comparison.png")
except ImportError:
    print("wrote l0_comparison.csv (install matplotlib for the plot)")

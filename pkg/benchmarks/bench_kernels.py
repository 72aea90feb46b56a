"""Compare numba and numpy kernel backends: ``python benchmarks/bench_kernels.py [N]``."""

import sys

from vfuse.bench import format_rows, run_benchmark

if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 20000
    sys.stdout.write(format_rows(run_benchmark(n)))

"""Wall time of an OLS pass as N grows at fixed K and block size.

    python3 scripts/scaling.py --sizes 250000 500000 1000000 2000000
"""

import argparse
import os
import statistics
import tempfile
import time

from streamreg.accumulate import accumulate_source
from streamreg.ingest import BlockStreamConfig, FileSource, Schema
from streamreg.linear import ols_fit
from streamreg.synth import SynthConfig, column_names, write_synth


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[250_000, 500_000, 1_000_000, 2_000_000])
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--block-size", type=int, default=65536)
    p.add_argument("--repetitions", type=int, default=5)
    args = p.parse_args(argv)

    schema = Schema(dependent="y", covariates=tuple(column_names(args.k)[1:]))
    print("n,mean_seconds,std_seconds,seconds_per_million_rows,ratio_to_previous")
    previous = None
    with tempfile.TemporaryDirectory() as tmp:
        for i, n in enumerate(args.sizes):
            path = os.path.join(tmp, f"synth_{n}.csv")
            write_synth(SynthConfig(n=n, k=args.k, seed=i), path)
            times = []
            for _ in range(args.repetitions):
                t0 = time.perf_counter()
                ols_fit(accumulate_source(FileSource(BlockStreamConfig(path, block_size=args.block_size), schema), intercept=True))
                times.append(time.perf_counter() - t0)
            os.remove(path)
            mean = statistics.fmean(times)
            std = statistics.stdev(times) if len(times) > 1 else 0.0
            ratio = "" if previous is None else f"{mean / previous:.3f}"
            print(f"{n},{mean:.4f},{std:.4f},{mean / n * 1e6:.4f},{ratio}")
            previous = mean


if __name__ == "__main__":
    main()

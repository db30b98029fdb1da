"""Time an OLS pass over a synthetic file for a range of block sizes.

    python3 scripts/block_size_sweep.py --n 200000 --k 5 --out sweep.csv
"""

import argparse
import os
import sys
import tempfile

from streamreg.bench import run_bench
from streamreg.ingest import BlockStreamConfig, FileSource, Schema
from streamreg.synth import SynthConfig, column_names, write_synth


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-sizes", type=int, nargs="+", default=[1, 16, 256, 4096, 65536, 1_048_576])
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--out", help="CSV path (default: stdout)")
    args = p.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "synth.csv")
        write_synth(SynthConfig(n=args.n, k=args.k, seed=args.seed), path)
        schema = Schema(dependent="y", covariates=tuple(column_names(args.k)[1:]))
        report = run_bench(
            lambda b: FileSource(BlockStreamConfig(path, block_size=b), schema),
            args.block_sizes,
            repetitions=args.repetitions,
        )
    text = report.to_csv() + f"# env {report.environment}\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()

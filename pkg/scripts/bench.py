"""Throughput of the full pipeline at full architecture width.

With no checkpoint an untrained 256x256 scale-1 generator is timed, which is
the configuration the throughput figure refers to; weights do not change cost.
"""

import argparse

from desmoke.bench import run_bench
from desmoke.dataset import synthetic_clear_frame
from desmoke.model import GeneratorSpec, build_generator
from desmoke.pipeline import Desmoker


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", default=None)
    ap.add_argument("--iterations", type=int, default=20)
    ap.add_argument("--warmup", type=int, default=3)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()

    model = Desmoker.from_checkpoint(args.checkpoint) if args.checkpoint else Desmoker(build_generator(GeneratorSpec()))
    report = run_bench(model, synthetic_clear_frame(model.resolution, 0), args.iterations, args.warmup)
    print(report.to_json() if args.json else report.text())


if __name__ == "__main__":
    main()

"""Guide-mask probe: how strongly the output departs from the input as the
embedded dark channel is scaled by each factor, averaged over held-out frames."""

import argparse
import json

from desmoke.dataset import load_manifest
from desmoke.imagecore import load_image
from desmoke.pipeline import Desmoker, probe_trend


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--manifest", required=True)
    ap.add_argument("--split", default="test")
    ap.add_argument("--factors", default="0,1,2")
    args = ap.parse_args()

    factors = tuple(float(f) for f in args.factors.split(","))
    manifest = load_manifest(args.manifest)
    images = [load_image(manifest.path(r.smoked_path)) for r in manifest.split(args.split)]
    vals = probe_trend(Desmoker.from_checkpoint(args.checkpoint), images, factors)
    print(json.dumps({"factors": factors, "mean_abs_change": vals, "images": len(images),
                      "non_decreasing": all(a <= b for a, b in zip(vals, vals[1:]))}, indent=2))


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Generate the demo harbor world and print a pipeline walkthrough.

Writes harbor.geojson, perturbations.json, and marine.cst into the target
directory, then shows the cstrack commands that take them through starmap
construction, field precomputation, and tracking.
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from cstrack.demo import HARBOR_BBOX_M, write_demo  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="demo", help="target directory")
    args = parser.parse_args()
    paths = write_demo(args.out_dir)
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    bbox = ",".join(str(v) for v in HARBOR_BBOX_M)
    out = pathlib.Path(args.out_dir)
    print(
        "\nNext steps:\n"
        f"  cstrack build-starmap --map {paths['map']} "
        f"--perturb {paths['perturbations']} \\\n"
        f"      --constitution {paths['constitution']} --bbox={bbox} "
        "--rows 100 --cols 100 \\\n"
        f"      --samples 100 --seed 7 --out {out / 'starmap.json'} "
        f"--pgm-dir {out / 'pgm'}\n"
        f"  cstrack field --constitution {paths['constitution']} "
        f"--starmap {out / 'starmap.json'} \\\n"
        f"      --out {out / 'field.json'} --pgm {out / 'field.pgm'}\n"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())

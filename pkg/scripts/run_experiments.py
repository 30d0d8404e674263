#!/usr/bin/env python3
"""Run every shipped experiment config and summarize the outcomes.

Each config lands in its own subdirectory of the output root.  The
reproducibility config is run twice and its CSV artifacts compared byte for
byte.  Exit status is nonzero if any run fails or any pass flag is false.
"""

import argparse
import json
import sys
from pathlib import Path

from pdmpkit.cli import run
from pdmpkit.config import load_config

REPO = Path(__file__).resolve().parent.parent


def run_one(path: Path, out_root: Path) -> bool:
    cfg = load_config(path)
    name = path.stem
    out = out_root / name
    status = run(cfg["command"], cfg, out)
    ok = status["status"] == "ok"

    if "reproducibility" in name and ok:
        second = run(cfg["command"], cfg, out_root / f"{name}_rerun")
        pairs = zip(sorted(a for a in status["artifacts"] if a.endswith(".csv")),
                    sorted(a for a in second["artifacts"] if a.endswith(".csv")))
        ok = all(Path(a).read_bytes() == Path(b).read_bytes() for a, b in pairs)
        print(f"  byte-identical rerun: {ok}")

    for artifact in status["artifacts"]:
        if artifact.endswith(".json"):
            payload = json.loads(Path(artifact).read_text())
            if "all_pass" in payload:
                ok = ok and bool(payload["all_pass"])
                print(f"  {Path(artifact).name}: all_pass={payload['all_pass']}")
            elif "verdict" in payload:
                print(f"  {Path(artifact).name}: verdict={payload['verdict']}")
    return ok


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/experiments")
    parser.add_argument("--only", default=None,
                        help="glob over config stems, e.g. 'accept0*'")
    args = parser.parse_args()
    out_root = Path(args.out)
    pattern = f"{args.only}.yaml" if args.only else "*.yaml"

    failures = []
    for path in sorted((REPO / "configs").glob(pattern)):
        print(f"== {path.name}")
        try:
            if not run_one(path, out_root):
                failures.append(path.name)
        except Exception as exc:  # keep going; report at the end
            print(f"  ERROR: {exc!r}")
            failures.append(path.name)

    print()
    if failures:
        print(f"FAILED: {failures}")
        return 1
    print("all experiment configs passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())

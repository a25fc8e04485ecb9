from __future__ import annotations

import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from qread.metrics.manifest import MANIFEST_NAME, RunManifest, file_digest  # noqa: E402


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Verify or rebuild the manifest digests of an output directory")
    parser.add_argument("--output", required=True)
    parser.add_argument("--rewrite", action="store_true", help="recompute digests and overwrite the manifest")
    return parser.parse_args()


def main() -> None:
    args = parse_args()
    root = Path(args.output)
    manifest = RunManifest.load(root / MANIFEST_NAME)
    if args.rewrite:
        manifest.outputs = {name: file_digest(root / name) for name in manifest.outputs if (root / name).exists()}
        manifest.write(root)
        print(f"rewrote {len(manifest.outputs)} digests in {root / MANIFEST_NAME}")
        return
    bad = manifest.verify(root)
    for name in bad:
        print(f"MISMATCH {name}")
    print(f"{len(manifest.outputs) - len(bad)}/{len(manifest.outputs)} outputs match ({manifest.command}, seed {manifest.seed})")
    if bad:
        raise SystemExit(1)


if __name__ == "__main__":
    main()

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List

from qread import __version__

MANIFEST_NAME = "manifest.json"


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to regenerate an output directory."""

    command: str
    config: Dict[str, Any]
    seed: int
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    outputs: Dict[str, str] = field(default_factory=dict)

    def record(self, paths: Iterable[str | Path], root: str | Path) -> None:
        root = Path(root)
        for path in paths:
            path = Path(path)
            self.outputs[path.relative_to(root).as_posix()] = file_digest(path)

    def write(self, root: str | Path) -> Path:
        path = Path(root) / MANIFEST_NAME
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        return cls(**raw)

    def verify(self, root: str | Path) -> List[str]:
        """Names of recorded outputs that are missing or whose digest changed."""
        root = Path(root)
        bad: List[str] = []
        for name, digest in sorted(self.outputs.items()):
            path = root / name
            if not path.exists() or file_digest(path) != digest:
                bad.append(name)
        return bad


def is_manifest(raw: Dict[str, Any]) -> bool:
    return isinstance(raw, dict) and {"command", "config", "outputs"} <= raw.keys()

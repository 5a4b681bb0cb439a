"""Run manifests and artifact serialization.

Every result file the CLI emits embeds the manifest of the run that produced
it: the subcommand, the fully resolved parameter map, the seed, library
versions plus a source hash, and wall-clock timestamps.  Since the params map
stores resolved values (point lists, edge text) rather than file paths,
re-running a manifest's command with its params reproduces the result payload
bit for bit in single-worker mode; timestamps and versions are provenance,
not inputs, and are excluded from that comparison.

Two artifact layouts:

* JSON: ``{"schema": 1, "manifest": {...}, "result": ...}``
* CSV: a leading ``# manifest: <json>`` comment line, then an RFC-4180-style
  table (CRLF line endings, quoting as needed).  The comment line is the one
  documented extension over plain RFC 4180.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__

SCHEMA = 1

_MANIFEST_PREFIX = "# manifest: "

_source_hash_cache: Optional[str] = None


def _source_hash() -> str:
    root = Path(__file__).resolve().parent
    digest = hashlib.blake2b(digest_size=6)
    for path in sorted(root.rglob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def build_versions() -> dict[str, str]:
    """Interpreter and library versions plus a package source hash."""
    global _source_hash_cache
    if _source_hash_cache is None:
        _source_hash_cache = _source_hash()
    return {
        "percolab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "source": _source_hash_cache,
    }


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class RunManifest:
    """What produced an artifact: command, resolved params, seed, versions."""

    command: str
    params: dict[str, Any]
    seed: int
    versions: dict[str, str] = field(default_factory=build_versions)
    started: str = field(default_factory=_utc_now)
    finished: str = ""

    def finish(self) -> "RunManifest":
        return replace(self, finished=_utc_now())

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA,
            "command": self.command,
            "params": self.params,
            "seed": self.seed,
            "versions": dict(self.versions),
            "started": self.started,
            "finished": self.finished,
        }


def manifest_from_dict(obj: dict[str, Any]) -> RunManifest:
    if obj.get("schema") != SCHEMA:
        raise ValueError(f"unsupported manifest schema: {obj.get('schema')!r}")
    return RunManifest(
        command=str(obj["command"]),
        params=dict(obj["params"]),
        seed=int(obj["seed"]),
        versions=dict(obj.get("versions", {})),
        started=str(obj.get("started", "")),
        finished=str(obj.get("finished", "")),
    )


def artifact_dict(manifest: RunManifest, result: Any) -> dict[str, Any]:
    return {"schema": SCHEMA, "manifest": manifest.to_dict(), "result": result}


def write_json_artifact(path, manifest: RunManifest, result: Any) -> None:
    text = json.dumps(artifact_dict(manifest, result), indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json_artifact(path) -> tuple[RunManifest, Any]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("schema") != SCHEMA:
        raise ValueError(f"unsupported artifact schema: {obj.get('schema')!r}")
    return manifest_from_dict(obj["manifest"]), obj["result"]


def write_csv_artifact(
    path,
    manifest: RunManifest,
    header: Sequence[str],
    rows: Sequence[Sequence[Any]],
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_MANIFEST_PREFIX + json.dumps(manifest.to_dict()) + "\r\n")
        writer = csv.writer(fh)
        writer.writerow(list(header))
        writer.writerows(rows)


def read_csv_artifact(path) -> tuple[RunManifest, list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith(_MANIFEST_PREFIX):
            raise ValueError("artifact is missing its manifest line")
        manifest = manifest_from_dict(json.loads(first[len(_MANIFEST_PREFIX):]))
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError("artifact has no header row")
    return manifest, rows[0], rows[1:]

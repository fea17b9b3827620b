"""Per-stage run manifests and upstream staleness checks."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from . import __version__

MANIFEST_SUFFIX = ".manifest.json"


class MissingInputError(FileNotFoundError):
    pass


class StaleArtifactError(RuntimeError):
    pass


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_path(artifact: str | Path) -> Path:
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + MANIFEST_SUFFIX)


def write_manifest(
    command: str,
    argv: list[str],
    inputs: dict[str, str | Path],
    outputs: list[str | Path],
    config: dict[str, Any],
    config_hash: str,
    seed: int,
    threads: int | None,
    timings: dict[str, float],
    extra: dict[str, Any] | None = None,
) -> Path:
    """Write ``<first output>.manifest.json``; ``inputs`` maps a role to a path."""
    payload = {
        "format": "segcl-manifest",
        "version": 1,
        "segcl_version": __version__,
        "command": command,
        "argv": argv,
        "seed": seed,
        "threads": threads,
        "config_hash": config_hash,
        "config": config,
        "inputs": {
            role: {"path": str(p), "sha256": sha256_file(p)} for role, p in inputs.items()
        },
        "outputs": [{"path": str(p), "sha256": sha256_file(p)} for p in outputs],
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
        **(extra or {}),
    }
    out = manifest_path(outputs[0])
    out.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return out


def require_input(path: str | Path, producer: str | None = None) -> Path:
    path = Path(path)
    if not path.is_file():
        hint = f"; produce it with `segcl {producer}`" if producer else ""
        raise MissingInputError(f"input not found: {path}{hint}")
    return path


def check_upstream(path: str | Path, producer: str) -> dict[str, Any]:
    """Verify ``path`` exists, came from ``segcl <producer>``, and is current.

    Current means the file still hashes to what its manifest recorded and every input
    recorded there (when still present) is unchanged.
    """
    path = require_input(path, producer)
    mpath = manifest_path(path)
    if not mpath.is_file():
        raise StaleArtifactError(
            f"{path} has no run manifest; regenerate it with `segcl {producer}`"
        )
    try:
        man = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        raise StaleArtifactError(f"{mpath} is unreadable; re-run `segcl {producer}`") from None
    if man.get("command") != producer:
        raise StaleArtifactError(
            f"{path} was written by `segcl {man.get('command')}`, expected `segcl {producer}`"
        )
    digest = sha256_file(path)
    recorded = {Path(o["path"]).resolve(): o["sha256"] for o in man.get("outputs", [])}
    if recorded.get(path.resolve()) != digest:
        raise StaleArtifactError(
            f"{path} changed after `segcl {producer}` wrote it; re-run `segcl {producer}`"
        )
    for role, rec in man.get("inputs", {}).items():
        p = Path(rec["path"])
        if p.is_file() and sha256_file(p) != rec["sha256"]:
            raise StaleArtifactError(
                f"{path} is stale: its {role} input {p} changed since it was built; "
                f"re-run `segcl {producer}`"
            )
    return man

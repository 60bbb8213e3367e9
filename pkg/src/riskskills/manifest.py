"""Run manifests: a JSON sidecar binding artifacts to their config.

Every CLI run directory gets a ``manifest.json`` recording the config hash,
the seed material, and a sha256 digest per produced file, so a run can be
audited later: recompute the digests, compare, and flag drift.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

from .core import ValidationError

MANIFEST_SCHEMA_VERSION = 1
_PROTECTED_KEYS = {"schema_version", "command", "config_sha256", "root_seed", "artifacts"}


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_sha256: str
    root_seed: int
    artifacts: dict[str, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def add_artifact(self, root: str, path: str) -> None:
        """Record ``path`` (stored relative to ``root``) with its digest."""
        rel = os.path.relpath(path, root)
        if os.sep != "/":
            rel = rel.replace(os.sep, "/")
        self.artifacts[rel] = file_digest(path)

    def to_document(self) -> dict:
        doc = {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "command": self.command,
            "config_sha256": self.config_sha256,
            "root_seed": self.root_seed,
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        clashes = _PROTECTED_KEYS & set(self.extra)
        if clashes:
            raise ValidationError(f"manifest extra keys clash with core keys: {sorted(clashes)}")
        doc.update(sorted(self.extra.items()))
        return doc


def write_manifest(manifest: RunManifest, root: str) -> str:
    path = os.path.join(root, "manifest.json")
    text = json.dumps(manifest.to_document(), indent=2, sort_keys=False) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def load_manifest(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValidationError("manifest must be a JSON object")
    version = doc.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported manifest schema_version {version!r}, "
            f"expected {MANIFEST_SCHEMA_VERSION}")
    missing = [key for key in ("command", "config_sha256", "root_seed", "artifacts")
               if key not in doc]
    if missing:
        raise ValidationError(f"manifest missing keys: {missing}")
    return doc


def verify_manifest(path: str) -> list[str]:
    """Return a list of problems (empty = every artifact present and intact)."""
    doc = load_manifest(path)
    root = os.path.dirname(os.path.abspath(path))
    problems = []
    for rel, expected in doc["artifacts"].items():
        target = os.path.join(root, rel)
        if not os.path.isfile(target):
            problems.append(f"missing artifact: {rel}")
            continue
        actual = file_digest(target)
        if actual != expected:
            problems.append(f"digest mismatch for {rel}: expected {expected}, got {actual}")
    return problems

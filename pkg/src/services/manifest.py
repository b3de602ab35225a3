"""
Run manifests for reproducible CLI invocations.

A manifest records the command line, the resolved configuration, seeds,
library versions, timestamps and checksums of the input files. Reports
never contain timestamps, so replaying ``argv`` reproduces them byte for
byte.
"""

import hashlib
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import scipy
import structlog
from pydantic import BaseModel, Field

from src import __version__
from src.config import Settings

logger = structlog.get_logger(__name__)


class RunManifest(BaseModel):
    """Everything needed to rerun a command."""

    command: str
    argv: List[str]
    config: Dict[str, Any] = Field(default_factory=dict)
    seeds: Dict[str, Optional[int]] = Field(default_factory=dict)
    input_checksums: Dict[str, str] = Field(default_factory=dict)
    versions: Dict[str, str] = Field(default_factory=dict)
    started_at: str
    finished_at: Optional[str] = None
    output: Optional[str] = None


def file_checksum(path: Path, chunk_size: int = 1 << 20) -> str:
    """SHA-256 of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class ManifestManager:
    """Builds and persists run manifests."""

    def __init__(self, settings: Settings):
        self.settings = settings

    def start(
        self,
        command: str,
        argv: Sequence[str],
        inputs: Sequence[Path] = (),
        seeds: Optional[Dict[str, Optional[int]]] = None
    ) -> RunManifest:
        """
        Open a manifest for a command about to run.

        Args:
            command: Subcommand name
            argv: Full argument vector (without the program name)
            inputs: Input files to checksum
            seeds: Seeds the command will use

        Returns:
            RunManifest with the start timestamp set
        """
        checksums = {str(p): file_checksum(Path(p)) for p in inputs}
        return RunManifest(
            command=command,
            argv=list(argv),
            seeds=seeds or {},
            input_checksums=checksums,
            versions={
                "csd": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            started_at=_now(),
        )

    def finish(self, manifest: RunManifest, config: Dict[str, Any], output: Optional[Path]) -> RunManifest:
        """Record the resolved configuration and the end timestamp."""
        return manifest.model_copy(update={
            "config": config,
            "finished_at": _now(),
            "output": str(output) if output else None,
        })

    @staticmethod
    def manifest_path(output: Path) -> Path:
        """Manifest location next to a report: ``<out>.manifest.json``."""
        return output.with_name(output.name + ".manifest.json")

    def save(self, manifest: RunManifest, output: Optional[Path]) -> Optional[Path]:
        """
        Write the manifest next to the report, or summarise it on stderr.

        Args:
            manifest: Completed manifest
            output: Report path, or None when the report went to stdout

        Returns:
            Manifest path, or None when only a summary was printed
        """
        payload = manifest.model_dump(mode="json")
        if output is None:
            summary = {"manifest": {k: payload[k] for k in ("command", "seeds", "input_checksums", "versions")}}
            print(json.dumps(summary, sort_keys=True), file=sys.stderr)
            return None

        path = self.manifest_path(output)
        try:
            with open(path, "w") as f:
                json.dump(payload, f, indent=2, sort_keys=True)
            logger.info("Manifest saved", path=str(path))
            return path
        except OSError as e:
            logger.error("Failed to save manifest", path=str(path), error=str(e))
            raise

    @staticmethod
    def load(path: Path) -> RunManifest:
        """Read a saved manifest."""
        with open(path, "r") as f:
            return RunManifest.model_validate(json.load(f))

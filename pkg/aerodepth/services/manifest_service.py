"""
Run manifests: one manifest.json per output directory recording how its
contents were produced.
"""
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional

from ..errors import ManifestError
from ..network.config import canonical_json, fingerprint

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
PACKAGE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def source_revision(package_dir: str = PACKAGE_DIR) -> str:
    """SHA-256 over the package's source files, in path order"""
    digest = hashlib.sha256()
    for directory, subdirs, files in sorted(os.walk(package_dir)):
        subdirs[:] = sorted(d for d in subdirs if d != '__pycache__')
        for name in sorted(files):
            if not name.endswith(('.py', '.html')):
                continue
            path = os.path.join(directory, name)
            digest.update(os.path.relpath(path, package_dir).encode('utf-8'))
            with open(path, 'rb') as handle:
                digest.update(handle.read())
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    parameters: Dict
    inputs: List[str]
    outputs: List[str] = field(default_factory=list)
    config_hash: str = ''
    revision: str = ''
    started_at: str = ''
    finished_at: Optional[str] = None

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = fingerprint({'command': self.command, 'parameters': self.parameters,
                                            'inputs': self.inputs})

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> 'RunManifest':
        return cls(**data)


def read_manifest(out_dir: str) -> Optional[RunManifest]:
    path = os.path.join(out_dir, MANIFEST_NAME)
    if not os.path.isfile(path):
        return None
    try:
        with open(path) as handle:
            return RunManifest.from_dict(json.load(handle))
    except (OSError, ValueError, TypeError) as e:
        raise ManifestError(f"Cannot read manifest {path}: {e}")


class ManifestService:
    """Guards output directories and writes their manifests"""

    def __init__(self, app=None):
        self.app = app
        self._revision = None

        if app:
            self.init_app(app)

    def init_app(self, app):
        self.app = app

    @property
    def revision(self) -> str:
        if self._revision is None:
            self._revision = source_revision()
        return self._revision

    def begin(self, command: str, parameters: Dict, inputs: List[str], out_dir: str,
              overwrite: bool = False) -> RunManifest:
        """
        Claim `out_dir` for a run. A directory holding a finished run is only
        reused with `overwrite`; a run that never finished is reclaimed.

        Raises:
            ManifestError: the directory already holds a finished run and overwrite is off
        """
        existing = read_manifest(out_dir)
        manifest = RunManifest(
            command=command,
            parameters=json.loads(canonical_json(parameters)),
            inputs=[os.path.abspath(p) for p in inputs],
            revision=self.revision,
            started_at=datetime.now(timezone.utc).isoformat(),
        )
        if existing is not None and existing.finished_at is None:
            logger.warning(f"Reclaiming unfinished '{existing.command}' run in {out_dir}")
        elif existing is not None and not overwrite:
            same = existing.config_hash == manifest.config_hash
            raise ManifestError(
                f"{out_dir} already holds a '{existing.command}' run"
                + (" with identical inputs" if same else "") + "; pass --overwrite to replace it"
            )
        elif existing is not None:
            logger.warning(f"Overwriting '{existing.command}' run in {out_dir}")
        os.makedirs(out_dir, exist_ok=True)
        self._write(manifest, out_dir)
        return manifest

    def finish(self, manifest: RunManifest, out_dir: str, outputs: List[str]) -> RunManifest:
        manifest.outputs = sorted(os.path.relpath(os.path.abspath(p), os.path.abspath(out_dir)) for p in outputs)
        manifest.finished_at = datetime.now(timezone.utc).isoformat()
        self._write(manifest, out_dir)
        logger.info(f"Run '{manifest.command}' finished with {len(outputs)} outputs in {out_dir}")
        return manifest

    def abandon(self, manifest: RunManifest, out_dir: str):
        """Drop the manifest of a run whose body failed, unless another run has since claimed the directory"""
        current = read_manifest(out_dir)
        if current is not None and current.started_at == manifest.started_at and current.finished_at is None:
            os.remove(os.path.join(out_dir, MANIFEST_NAME))
            logger.warning(f"Run '{manifest.command}' failed; released {out_dir}")

    def _write(self, manifest: RunManifest, out_dir: str):
        with open(os.path.join(out_dir, MANIFEST_NAME), 'w') as handle:
            json.dump(manifest.to_dict(), handle, indent=2, sort_keys=True)


manifest_service = ManifestService()

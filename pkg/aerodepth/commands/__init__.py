import os
from contextlib import contextmanager
from typing import Dict, List, Sequence

from ..services.manifest_service import manifest_service


def default_out(app, command: str, out: str = None) -> str:
    return out or os.path.join(app.output_root, command)


def split_paths(values) -> List[str]:
    """Flatten repeated and comma-separated path options"""
    if isinstance(values, str):
        values = [values]
    paths = []
    for value in values or ():
        paths.extend(part for part in value.split(',') if part)
    return paths


@contextmanager
def guarded_run(command: str, parameters: Dict, inputs: Sequence[str], out_dir: str, overwrite: bool):
    """
    Claim the output directory, collect output paths in the yielded list and
    record them in the manifest once the body succeeds. A failing body
    releases the directory again.
    """
    manifest = manifest_service.begin(command, parameters, list(inputs), out_dir, overwrite)
    outputs: List[str] = []
    try:
        yield outputs
    except Exception:
        manifest_service.abandon(manifest, out_dir)
        raise
    manifest_service.finish(manifest, out_dir, outputs)

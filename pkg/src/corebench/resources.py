"""Resolution of file references inside scenario documents.

A reference of the form ``bundled:<relative path>`` points into the data
shipped with the package (``bundled:profiles/youtube.profile.csv``). Any
other reference is a filesystem path, taken relative to the scenario
file's directory when it is not absolute.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

BUNDLED_PREFIX = "bundled:"


def data_root() -> Path:
    return Path(str(resources.files("corebench.data")))


def resolve_ref(ref: str, base_dir: str | Path | None = None) -> Path:
    if ref.startswith(BUNDLED_PREFIX):
        return data_root() / ref[len(BUNDLED_PREFIX):]
    path = Path(ref)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return path

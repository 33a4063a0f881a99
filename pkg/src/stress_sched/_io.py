import json
import os
import tempfile
from functools import lru_cache
from importlib import resources
from pathlib import Path


def atomic_write_text(path, text: str) -> None:
    """Write via a sibling temp file and rename, so no partial file survives."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@lru_cache(maxsize=1)
def _defaults_text() -> str:
    return resources.files("stress_sched").joinpath("defaults.json").read_text()


def load_defaults() -> dict:
    """Fresh copy of the checked-in parameter defaults."""
    return json.loads(_defaults_text())

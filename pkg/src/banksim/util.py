from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import banksim


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the target directory and rename over the destination."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with tempfile.NamedTemporaryFile(
        "w", dir=directory, delete=False, suffix=".tmp"
    ) as buf:
        buf.write(text)
        tmp_name = buf.name
    try:
        os.replace(tmp_name, path)
    except OSError:
        os.unlink(tmp_name)
        raise


def write_json(path: str, doc: Any) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def float_repr(value: float) -> str:
    # repr() is the shortest string that parses back to the same double
    return repr(float(value))


@dataclass
class RunManifest:
    command: str
    config_path: Optional[str]
    seed: Optional[int]
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    arguments: Dict[str, Any] = field(default_factory=dict)
    version: str = banksim.__version__
    duration_s: float = 0.0

    def path_for(self, output: str) -> str:
        return output + ".manifest.json"

    def write(self, output: str) -> str:
        path = self.path_for(output)
        write_json(path, asdict(self))
        return path

"""Reproducible output files: config-echo headers and atomic writes."""

from __future__ import annotations

import json
import math
import os
import tempfile

from . import __version__
from .errors import NumericalError

FLOAT_FMT = "%.17g"


def header_lines(command: str, config_yaml: str):
    lines = [f"jumpctl {__version__}", f"command: {command}", "config:"]
    lines += ["  " + line for line in config_yaml.rstrip("\n").splitlines()]
    return ["# " + line for line in lines]


def parse_header(text: str) -> str:
    """Recover the echoed config YAML from a CSV header."""
    out, inside = [], False
    for line in text.splitlines():
        if not line.startswith("# "):
            break
        body = line[2:]
        if inside:
            out.append(body[2:])
        elif body == "config:":
            inside = True
    return "\n".join(out) + "\n"


def _cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int) or (hasattr(v, "dtype") and v.dtype.kind in "iub"):
        return str(int(v))
    x = float(v)
    if not math.isfinite(x):
        raise NumericalError(f"non-finite value {x} in output column")
    return FLOAT_FMT % x


def atomic_write(path, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(columns, rows, command: str, config_yaml: str) -> str:
    lines = header_lines(command, config_yaml)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows, command: str, config_yaml: str):
    # format everything first so a numerical failure leaves no partial file
    atomic_write(path, csv_text(columns, rows, command, config_yaml))


def write_jsonl(path, records, command: str, config_yaml: str):
    meta = {"jumpctl_version": __version__, "command": command, "config_yaml": config_yaml}
    lines = [json.dumps(meta, sort_keys=True)] + [r.to_json() for r in records]
    atomic_write(path, "\n".join(lines) + "\n")

"""Delimiter-separated tables with unit-tagged column headers.

Layout::

    # key: value            (optional metadata lines)
    # tau_w[s] p_s_plus[1]  (column header)
    0 0.5
    ...
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from app_utils.config_manager import get_config_manager
from app_utils.errors import OutputIOError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class Table(NamedTuple):
    names: List[str]
    units: List[str]
    data: np.ndarray
    meta: Dict[str, str]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.names.index(name)]
        except ValueError:
            raise KeyError(f"No column named {name!r}")


def format_value(value) -> str:
    """Render a scalar with the configured float format"""
    if isinstance(value, (float, np.floating)):
        return get_config_manager().get_float_format() % value
    return str(value)


def write_table(path: PathLike, columns: Sequence[Tuple[str, str]], data,
                meta: Optional[Mapping[str, object]] = None) -> Path:
    """Write columns (name, unit) of a 2-D array with optional metadata lines"""
    path = Path(path)
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise ValidationError(f"{len(columns)} column headers for data of shape {data.shape}")

    config = get_config_manager()
    delimiter = config.get_delimiter()
    lines = [f"# {key}: {format_value(value)}" for key, value in (meta or {}).items()]
    lines.append("# " + delimiter.join(f"{name}[{unit}]" for name, unit in columns))
    fmt = config.get_float_format()
    lines.extend(delimiter.join(fmt % v for v in row) for row in data)
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputIOError(f"Failed to write table {path}: {e}") from e
    logger.debug("Wrote table %s (%d rows)", path, data.shape[0])
    return path


def _split(line: str) -> List[str]:
    delimiter = get_config_manager().get_delimiter()
    if delimiter.strip():
        return [token.strip() for token in line.split(delimiter)]
    return line.split()


def _parse_column(token: str) -> Tuple[str, str]:
    if not token.endswith("]") or "[" not in token:
        raise ValidationError(f"Column header {token!r} is not of the form name[unit]")
    name, unit = token[:-1].split("[", 1)
    return name, unit


def read_table(path: PathLike) -> Table:
    """Read a table written by write_table"""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise OutputIOError(f"Failed to read table {path}: {e}") from e

    comments = [line[1:].strip() for line in lines if line.startswith("#")]
    if not comments:
        raise ValidationError(f"{path}: missing column header")
    meta = {}
    for line in comments[:-1]:
        key, _, value = line.partition(":")
        meta[key.strip()] = value.strip()
    names, units = zip(*(_parse_column(tok) for tok in _split(comments[-1])))

    rows = [_split(line) for line in lines if line.strip() and not line.startswith("#")]
    try:
        data = np.array(rows, dtype=float).reshape(len(rows), len(names))
    except ValueError as e:
        raise ValidationError(f"{path}: rows do not match {len(names)} columns: {e}") from e
    return Table(list(names), list(units), data, meta)

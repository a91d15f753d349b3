"""
CSV and JSON writers shared by the commands.
"""
import json
import os
from fractions import Fraction
from typing import Any

import numpy as np
import pandas as pd


def to_jsonable(value: Any) -> Any:
    """Recursively convert numpy scalars, arrays and Fractions for json.dumps."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, Fraction):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_json(path: str, payload: Any) -> str:
    """Write `payload` as sorted, indented JSON and return the path."""
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(to_jsonable(payload), f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def write_csv(path: str, frame: pd.DataFrame) -> str:
    """Write an RFC-4180 CSV (header row, CRLF, '.' decimal) and return the path."""
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    frame.to_csv(path, index=False, lineterminator='\r\n', float_format='%.17g')
    return path


def write_lines(path: str, lines) -> str:
    """Write plain text lines."""
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for line in lines:
            f.write(f"{line}\n")
    return path

"""Run reports: JSON (full precision, sorted keys) and CSV (15 significant digits)."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from . import __version__

_MPFR = type(gmpy2.mpfr(0))
_MPQ = type(gmpy2.mpq(0))
_MPZ = type(gmpy2.mpz(0))


def _mpfr_digits(x):
    return max(1, int(x.precision * math.log10(2)) - 1)


def num(x):
    """Full-precision decimal string for the JSON record."""
    if isinstance(x, _MPFR):
        return format(x, f".{_mpfr_digits(x)}g")
    if isinstance(x, _MPQ):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (np.floating,)):
        return repr(float(x))
    return str(x)


def short(x):
    """15 significant digits, for CSV cells."""
    if isinstance(x, (_MPFR, float, np.floating)):
        return format(x, ".15g") if isinstance(x, _MPFR) else f"{float(x):.15g}"
    if isinstance(x, _MPQ):
        return f"{float(x):.15g}"
    if x is None:
        return ""
    return str(x)


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, _MPZ, np.integer)) and not isinstance(obj, bool):
        return int(obj)
    return num(obj)


@dataclass
class Check:
    name: str
    value: object
    tolerance: object
    passed: bool
    detail: str = ""

    def as_dict(self):
        return {
            "name": self.name,
            "value": jsonable(self.value),
            "tolerance": jsonable(self.tolerance),
            "passed": bool(self.passed),
            "detail": self.detail,
        }


def versions():
    return {
        "lyapgauss": __version__,
        "gmpy2": gmpy2.version(),
        "numpy": np.__version__,
        "python": platform.python_version(),
    }


@dataclass
class RunReport:
    command: str
    inputs: dict
    outputs: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    header: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c.name for c in self.checks if not c.passed]

    def payload(self):
        return {
            "command": self.command,
            "inputs": jsonable(self.inputs),
            "outputs": jsonable(self.outputs),
            "checks": [c.as_dict() for c in self.checks],
            "passed": self.passed,
            "versions": versions(),
        }

    def to_json(self):
        return dumps(self.payload())

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        for row in self.rows:
            writer.writerow([short(v) for v in row])
        return buf.getvalue()

    def render(self, fmt):
        return self.to_csv() if fmt == "csv" else self.to_json()

    def check_table(self):
        width = max((len(c.name) for c in self.checks), default=4)
        lines = []
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            lines.append(f"{flag}  {c.name:<{width}}  value={short(c.value)}  tol={short(c.tolerance)}")
        return "\n".join(lines)


def dumps(obj):
    """Canonical JSON text: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"

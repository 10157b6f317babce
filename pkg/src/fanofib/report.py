"""Structured run reports and byte-deterministic emission.

Norms and orders are serialized as decimal strings (shortest
round-trip) and exact rationals as "p/q" strings; wall times are kept
in memory for the console table but never written to the artifacts, so
two runs of the same configuration produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FanofibError


@dataclass(eq=False)
class CheckRecord:
    name: str
    pipeline: str
    grid: tuple[int, int]
    residual: float
    tolerance: float
    passed: bool
    values: dict = field(default_factory=dict)
    wall_time: float = 0.0


@dataclass(eq=False)
class Report:
    model: dict
    constants: dict
    grids: list
    checks: list
    records: list = field(default_factory=list)
    orders: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)   # (pipeline, grid) -> columns
    provenance: dict = field(default_factory=dict)
    error: dict | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(r.passed for r in self.records)


def _num(x):
    """Decimal-string serialization that round-trips exactly."""
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, (bool, int, str)) or x is None:
        return x
    return repr(float(x))


def config_digest(mapping: dict) -> str:
    canon = json.dumps({k: _num(v) if not isinstance(v, (list, tuple, dict))
                        else v for k, v in sorted(mapping.items())},
                       sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def report_payload(report: Report) -> dict:
    records = []
    for r in report.records:
        records.append({
            "name": r.name,
            "pipeline": r.pipeline,
            "grid": list(r.grid),
            "residual": _num(r.residual),
            "tolerance": _num(r.tolerance),
            "passed": r.passed,
            "values": {k: _num(v) for k, v in sorted(r.values.items())},
        })
    payload = {
        "model": {k: _num(v) for k, v in report.model.items()},
        "constants": {k: _num(v) for k, v in report.constants.items()},
        "grids": [list(g) for g in report.grids],
        "checks": list(report.checks),
        "records": records,
        "orders": {k: [_num(v) for v in vs] for k, vs in sorted(report.orders.items())},
        "provenance": dict(report.provenance),
        "passed": report.passed,
    }
    if report.error is not None:
        payload["error"] = report.error
    return payload


def emit_report(report: Report, out_dir) -> list[Path]:
    """Write report.json and one CSV of base profiles per pipeline/grid."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        jpath = out / "report.json"
        jpath.write_text(json.dumps(report_payload(report), indent=2,
                                    sort_keys=True) + "\n")
        paths.append(jpath)
        for (pipeline, grid), columns in report.profiles.items():
            fname = out / f"profiles_{pipeline}_{grid[0]}x{grid[1]}.csv"
            names = list(columns)
            rows = np.column_stack([np.asarray(columns[k]) for k in names])
            lines = [",".join(names)]
            for row in rows:
                lines.append(",".join(repr(float(v)) for v in row))
            fname.write_text("\n".join(lines) + "\n")
            paths.append(fname)
        return paths
    except OSError as exc:
        raise FanofibError(f"report emission failed at {out}: {exc}") from exc


def console_table(report: Report) -> str:
    lines = [f"{'check':<40} {'grid':>9} {'residual':>12} {'tol':>10} "
             f"{'time':>8}  status"]
    for r in report.records:
        name = f"{r.name}[{r.pipeline}]"
        grid = f"{r.grid[0]}x{r.grid[1]}"
        status = "pass" if r.passed else "FAIL"
        lines.append(f"{name:<40} {grid:>9} {r.residual:>12.3e} "
                     f"{r.tolerance:>10.1e} {r.wall_time:>7.2f}s  {status}")
    return "\n".join(lines)


def provenance(config_mapping: dict) -> dict:
    return {"config_sha256": config_digest(config_mapping),
            "code_version": __version__}

"""
End-to-end pipeline report.

Each check compares a recovered quantity against the synthetic truth under a
tolerance fixed before the run; a check is "triggered" when the recovered value
falls outside it. The run is rejected if any check triggers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

# Tolerances are locked here, not in the config file, so a run cannot loosen them.
MU_ABS_TOL = 2.0
# the photon check widens to this many fitted mu errors when that is larger than MU_ABS_TOL
MU_ERR_MULTIPLE = 3.0
DELTA_REL_TOL = 0.01
Q_REL_TOL = 0.02
RESOLUTION_REL_TOL = 0.10


@dataclass(frozen=True)
class Check:
    name: str
    truth: float
    value: float
    tolerance: float
    relative: bool

    @property
    def deviation(self) -> float:
        d = abs(self.value - self.truth)
        return d / abs(self.truth) if self.relative else d

    @property
    def triggered(self) -> bool:
        return not self.deviation <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "truth": self.truth,
            "value": self.value,
            "tolerance": self.tolerance,
            "tolerance_kind": "relative" if self.relative else "absolute",
            "deviation": self.deviation,
            "triggered": self.triggered,
        }


def build_checks(
    truth: Dict[str, float],
    q_total: float,
    delta: float,
    resolution: float,
    mu: float,
    mu_err: float = float("nan"),
) -> List[Check]:
    mu_tol = MU_ABS_TOL
    if math.isfinite(mu_err):
        mu_tol = max(MU_ABS_TOL, MU_ERR_MULTIPLE * mu_err)
    return [
        Check("resonance_q", truth["q_total"], q_total, Q_REL_TOL, relative=True),
        Check("gap_delta", truth["delta_ev"], delta, DELTA_REL_TOL, relative=True),
        Check("of_resolution", truth["resolution"], resolution, RESOLUTION_REL_TOL, relative=True),
        Check("photon_mu", truth["mu"], mu, mu_tol, relative=False),
    ]


def evaluate(checks: List[Check], stages: Dict[str, dict], info: Optional[Dict[str, object]] = None) -> dict:
    return {
        "rejected": any(c.triggered for c in checks),
        "checks": {c.name: c.to_dict() for c in checks},
        "stages": stages,
        "info": info or {},
    }


def render_markdown(report: dict, files: List[str]) -> str:
    lines = []
    lines.append("# Pipeline Report")
    lines.append("")
    lines.append(f"- Rejected by tolerance checks: **{report['rejected']}**")
    lines.append("")
    lines.append("## Checks")
    lines.append("")
    lines.append("| check | truth | recovered | tolerance | result |")
    lines.append("|---|---|---|---|---|")
    for key in sorted(report["checks"]):
        c = report["checks"][key]
        tol = f"{c['tolerance']:.0%}" if c["tolerance_kind"] == "relative" else f"±{c['tolerance']:g}"
        status = "TRIGGERED" if c["triggered"] else "PASS"
        lines.append(f"| {c['name']} | {c['truth']:.6g} | {c['value']:.6g} | {tol} | {status} |")
    lines.append("")
    lines.append("## Stages")
    for name in sorted(report["stages"]):
        lines.append(f"- {name}: `{json.dumps(report['stages'][name], sort_keys=True)}`")
    lines.append("")
    if report.get("info"):
        lines.append("## Additional results")
        for k in sorted(report["info"]):
            lines.append(f"- {k}: {report['info'][k]}")
        lines.append("")
    lines.append("## Files written")
    for f in files:
        lines.append(f"- {f}")
    lines.append("")
    return "\n".join(lines)

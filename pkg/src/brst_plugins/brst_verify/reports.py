"""Identity and run reports with their JSON and Markdown renderings."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import IO, Any, Dict, List, Optional

import pandas as pd
from colorama import Fore, Style

logger = logging.getLogger(__name__)

TOOL_VERSION = "0.1.0"
REPORT_SCHEMA = 1

PASS = "pass"
FAIL = "fail"

SUMMARY_COLUMNS = ["identity", "status", "mode", "tier", "trials", "residual terms"]


def _pairs(values: Dict[str, Any]) -> str:
    return ", ".join(f"{key}={value}" for key, value in sorted(values.items()))


@dataclass
class IdentityReport:
    identity_id: str
    anchor: str
    mode: str
    status: str
    tier: int = 1
    residual_term_count: int = 0
    trials: int = 0
    seeds: List[str] = field(default_factory=list)
    elapsed_ms: float = 0.0
    residual: str = ""
    note: str = ""
    trace: List[Dict[str, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self, timings: bool = False) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("trace")
        if not timings:
            data.pop("elapsed_ms")
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "IdentityReport":
        return cls(**data)


@dataclass
class RunReport:
    scene: Dict[str, Any]
    settings: Dict[str, Any]
    identities: List[IdentityReport] = field(default_factory=list)
    version: str = TOOL_VERSION
    schema: int = REPORT_SCHEMA

    def __post_init__(self):
        self.identities = sorted(self.identities, key=lambda r: r.identity_id)

    @property
    def status(self) -> str:
        if self.identities and all(r.passed for r in self.identities):
            return PASS
        return FAIL

    @property
    def failed(self) -> List[IdentityReport]:
        return [r for r in self.identities if not r.passed]

    def merge(self, other: "RunReport") -> "RunReport":
        scenes = self.scene.get("scenes", [self.scene])
        scenes = scenes + other.scene.get("scenes", [other.scene])
        return RunReport(
            {"scenes": scenes}, self.settings, self.identities + other.identities
        )

    def to_dict(self, timings: bool = False) -> Dict[str, Any]:
        return {
            "schema": self.schema,
            "version": self.version,
            "status": self.status,
            "scene": self.scene,
            "settings": self.settings,
            "identities": [r.to_dict(timings) for r in self.identities],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunReport":
        return cls(
            scene=data["scene"],
            settings=data["settings"],
            identities=[IdentityReport.from_dict(r) for r in data["identities"]],
            version=data["version"],
            schema=data["schema"],
        )

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "identity": r.identity_id,
                    "status": r.status,
                    "mode": r.mode,
                    "tier": r.tier,
                    "trials": r.trials,
                    "residual terms": r.residual_term_count,
                }
                for r in self.identities
            ],
            columns=SUMMARY_COLUMNS,
        )

    def to_markdown(self) -> str:
        lines = [f"# BRST verification report ({self.status})", ""]
        lines.append(f"- tool version: {self.version} (schema {self.schema})")
        scenes = self.scene.get("scenes", [self.scene])
        for scene in scenes:
            lines.append("- scene: " + _pairs(scene))
        lines.append("- settings: " + _pairs(self.settings))
        lines += ["", "```", self.summary_frame().to_string(index=False), "```", ""]
        for r in self.identities:
            lines.append(f"## {r.identity_id}: {r.status}")
            lines.append("")
            lines.append(f"> {r.anchor}")
            if r.note:
                lines += ["", r.note]
            if not r.passed:
                lines += [
                    "",
                    f"Residual ({r.residual_term_count} terms):",
                    "",
                    "```",
                    r.residual,
                    "```",
                ]
            lines.append("")
        return "\n".join(lines)


def emit_report(report: RunReport, fmt: str, stream: IO[str]) -> None:
    """Write the machine (json) or human (md) rendering of a run."""
    if fmt == "json":
        stream.write(report.to_json())
    elif fmt == "md":
        stream.write(report.to_markdown())
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def verdict_line(report: IdentityReport) -> str:
    colour = Fore.GREEN if report.passed else Fore.RED
    detail = f"tier {report.tier}"
    if report.trials:
        detail += f", {report.trials} trials"
    if not report.passed:
        detail += f", {report.residual_term_count} residual terms"
    status = f"{colour}{report.status.upper():4}{Style.RESET_ALL}"
    return f"{status} {report.identity_id} ({detail})"


def trace_lines(report: IdentityReport) -> List[str]:
    lines = []
    for entry in report.trace:
        lines.append(
            f"{report.identity_id} seed={entry['seed']} point={entry['point']}\n"
            f"  lhs: {entry['lhs']}\n  rhs: {entry['rhs']}"
        )
    return lines


def find(report: RunReport, identity_id: str) -> Optional[IdentityReport]:
    for r in report.identities:
        if r.identity_id == identity_id:
            return r
    return None

"""Structured key-value text reports with one block per test record."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


def fmt(value) -> str:
    """Shortest round-trip text for numbers; JSON for containers."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, (list, tuple, dict)):
        return json.dumps(value, sort_keys=True)
    return str(value)


def _parse(text: str):
    if text in ("true", "false"):
        return text == "true"
    if text in ("nan", "inf", "-inf"):
        return float(text)
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text[:1] in "[{":
        return json.loads(text)
    return text


@dataclass
class TestReport:
    """Named collection of per-test records; ``passed`` is true when no record failed."""

    __test__ = False  # not a pytest class

    name: str
    meta: dict = field(default_factory=dict)
    records: list = field(default_factory=list)

    def add(self, **record):
        self.records.append(record)

    @property
    def passed(self) -> bool:
        return all(r.get("pass", True) for r in self.records)

    @property
    def failures(self):
        return [r for r in self.records if not r.get("pass", True)]

    def to_text(self) -> str:
        lines = [f"report: {self.name}"]
        lines += [f"{k}: {fmt(v)}" for k, v in self.meta.items()]
        lines.append(f"passed: {fmt(self.passed)}")
        for r in self.records:
            lines.append("")
            lines.append("[record]")
            lines += [f"{k}: {fmt(v)}" for k, v in r.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TestReport":
        report = None
        current = None
        for line in text.splitlines():
            if not line.strip():
                continue
            if line == "[record]":
                current = {}
                report.records.append(current)
                continue
            key, _, value = line.partition(": ")
            if report is None:
                report = cls(value)
            elif current is not None:
                current[key] = _parse(value)
            elif key != "passed":
                report.meta[key] = _parse(value)
        return report

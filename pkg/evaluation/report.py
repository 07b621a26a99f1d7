import json
from pathlib import Path
from typing import Dict, Union

from pydantic import BaseModel, validator


class MetricReport(BaseModel):
    """Aggregate flow metrics; percentages lie in [0, 100]"""
    aepe: float
    pck: Dict[str, float]
    f1_all: float
    count: int

    @validator("pck")
    def pck_percentages(cls, value):
        for threshold, percentage in value.items():
            if not 0.0 <= percentage <= 100.0:
                raise ValueError(f"PCK@{threshold} = {percentage} is not a percentage")
        return value

    @validator("f1_all")
    def f1_percentage(cls, value):
        if not 0.0 <= value <= 100.0:
            raise ValueError(f"F1-all = {value} is not a percentage")
        return value

    @validator("count")
    def positive_count(cls, value):
        if value < 1:
            raise ValueError("count must be positive")
        return value

    def to_json(self) -> str:
        return json.dumps({"aepe": self.aepe, "pck": self.pck, "f1_all": self.f1_all, "count": self.count},
                          indent=2)


def threshold_key(threshold: float) -> str:
    """1.0 -> "1", 0.5 -> "0.5" """
    return f"{threshold:g}"


def write_report(report: MetricReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json() + "\n", encoding="utf-8")
    return path

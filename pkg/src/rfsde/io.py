"""Output writers: CSV tables, JSON summaries, run manifests, SVG charts.

Floats are written with 17 significant digits and no locale dependence,
so identical runs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = ["format_number", "write_csv", "write_json", "to_jsonable", "RunManifest", "risk_curve_svg"]


def format_number(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    lines.extend(",".join(format_number(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def to_jsonable(obj: Any) -> Any:
    """Convert numpy values and dataclasses to plain JSON types; NaN/inf become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _dumps(obj: Any, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dumps(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _dumps(v, indent + 1) for v in obj) + "\n" + "  " * indent + "]"
    if isinstance(obj, float):
        return format_number(obj)
    return json.dumps(obj)


def write_json(path, obj: Any) -> Path:
    path = Path(path)
    path.write_text(_dumps(to_jsonable(obj)) + "\n", encoding="utf-8", newline="\n")
    return path


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    tool_version: str
    command: str
    config_hash: str
    master_seed: int | None
    prng: str
    grid: dict[str, Any]
    threads: int
    timings: dict[str, float] = field(default_factory=dict)
    outputs: list[dict[str, str]] = field(default_factory=list)

    def add_output(self, path) -> None:
        path = Path(path)
        self.outputs.append({"file": path.name, "sha256": file_sha256(path)})

    def write(self, path) -> Path:
        return write_json(path, asdict(self))


def risk_curve_svg(
    eps: Sequence[float],
    risk: Sequence[float],
    slope: float | None = None,
    intercept: float | None = None,
    title: str = "risk vs noise level",
    width: int = 480,
    height: int = 360,
) -> str:
    """Self-contained log-log line chart of a risk curve with an optional fitted line."""
    x = np.log10(np.asarray(eps, dtype=float))
    y = np.log10(np.asarray(risk, dtype=float))
    pad = 50
    x0, x1 = x.min(), x.max()
    y0, y1 = y.min(), y.max()
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 10}" text-anchor="middle" font-size="12">log10 eps</text>',
        f'<text x="15" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 15 {height / 2:.0f})">log10 risk</text>',
        f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>',
    ]
    parts += [f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="steelblue"/>' for a, b in zip(x, y)]
    if slope is not None and intercept is not None:
        # fit is in natural logs: log risk = intercept + slope log eps
        f = lambda v: (intercept + slope * v * math.log(10)) / math.log(10)  # noqa: E731
        parts.append(
            f'<line x1="{px(x0):.2f}" y1="{py(f(x0)):.2f}" x2="{px(x1):.2f}" y2="{py(f(x1)):.2f}" '
            f'stroke="darkorange" stroke-dasharray="4 3"/>'
        )
        parts.append(f'<text x="{width - pad}" y="{pad}" text-anchor="end" font-size="12">slope {slope:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

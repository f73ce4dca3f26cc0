"""
Standalone SVG charts on log-log axes
"""

import logging
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from errors import RenderError

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 800, 520
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 80, 190, 40, 60
PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]

Curve = Sequence[Tuple[float, float]]


def _as_points(name: str, curve) -> np.ndarray:
    pairs = [(p.t, p.mean_w1) if hasattr(p, "mean_w1") else (p[0], p[1]) for p in curve]
    data = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    if data.shape[0] == 0:
        raise RenderError(f"curve {name!r} is empty")
    if not np.all(np.isfinite(data)) or np.any(data <= 0):
        raise RenderError(f"curve {name!r} has nonpositive or non-finite data; cannot draw on log axes")
    return data


def _decade_range(values: np.ndarray) -> Tuple[float, float]:
    lo, hi = float(np.log10(values.min())), float(np.log10(values.max()))
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


class LogLogFrame:
    """Maps data coordinates to pixels on the plot area"""

    def __init__(self, x_range: Tuple[float, float], y_range: Tuple[float, float]):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.width = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
        self.height = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def x(self, t: np.ndarray) -> np.ndarray:
        return MARGIN_LEFT + (np.log10(t) - self.x0) / (self.x1 - self.x0) * self.width

    def y(self, v: np.ndarray) -> np.ndarray:
        return MARGIN_TOP + (self.y1 - np.log10(v)) / (self.y1 - self.y0) * self.height


def _text(parent: ET.Element, x: float, y: float, label: str, **attrs) -> ET.Element:
    node = ET.SubElement(parent, "text", {"x": f"{x:.3f}", "y": f"{y:.3f}", **attrs})
    node.text = label
    return node


def _axes(svg: ET.Element, frame: LogLogFrame, x_label: str, y_label: str) -> None:
    bottom = MARGIN_TOP + frame.height
    ET.SubElement(svg, "rect", {"x": str(MARGIN_LEFT), "y": str(MARGIN_TOP), "width": str(frame.width),
                                "height": str(frame.height), "fill": "none", "stroke": "#000"})
    for k in range(math.ceil(frame.x0 - 1e-9), math.floor(frame.x1 + 1e-9) + 1):
        px = float(frame.x(np.float64(10.0 ** k)))
        ET.SubElement(svg, "line", {"x1": f"{px:.3f}", "y1": str(bottom), "x2": f"{px:.3f}",
                                    "y2": str(bottom + 6), "stroke": "#000"})
        _text(svg, px, bottom + 22, f"1e{k}", **{"text-anchor": "middle", "font-size": "12"})
    for k in range(math.ceil(frame.y0 - 1e-9), math.floor(frame.y1 + 1e-9) + 1):
        py = float(frame.y(np.float64(10.0 ** k)))
        ET.SubElement(svg, "line", {"x1": str(MARGIN_LEFT - 6), "y1": f"{py:.3f}", "x2": str(MARGIN_LEFT),
                                    "y2": f"{py:.3f}", "stroke": "#000"})
        _text(svg, MARGIN_LEFT - 10, py + 4, f"1e{k}", **{"text-anchor": "end", "font-size": "12"})
    _text(svg, MARGIN_LEFT + frame.width / 2, HEIGHT - 15, x_label,
          **{"text-anchor": "middle", "font-size": "14", "class": "x-label"})
    _text(svg, 20, MARGIN_TOP + frame.height / 2, y_label,
          **{"text-anchor": "middle", "font-size": "14", "class": "y-label",
             "transform": f"rotate(-90 20 {MARGIN_TOP + frame.height / 2:.3f})"})


def emit_svg_loglog(curves: Union[Dict[str, Curve], Sequence[Tuple[str, Curve]]],
                    path: Union[str, Path], title: str = "", x_label: str = "t",
                    y_label: str = "mean W1") -> Path:
    """
    Render named curves on log-log axes as a standalone SVG document
    Args:
        curves: Mapping (or ordered pairs) of name to (t, value) points or CurvePoint records
        path: Output file
        title: Chart title
        x_label: Horizontal axis label
        y_label: Vertical axis label
    Returns:
        Path to the written file; RenderError names any curve with nonpositive data
    """
    named = list(curves.items()) if isinstance(curves, dict) else list(curves)
    if not named:
        raise RenderError("nothing to draw")
    data = [(name, _as_points(name, curve)) for name, curve in named]
    all_points = np.concatenate([d for _, d in data])
    frame = LogLogFrame(_decade_range(all_points[:, 0]), _decade_range(all_points[:, 1]))

    svg = ET.Element("svg", {"xmlns": "http://www.w3.org/2000/svg", "width": str(WIDTH),
                             "height": str(HEIGHT), "viewBox": f"0 0 {WIDTH} {HEIGHT}"})
    if title:
        _text(svg, WIDTH / 2, 24, title, **{"text-anchor": "middle", "font-size": "16"})
    _axes(svg, frame, x_label, y_label)

    legend = ET.SubElement(svg, "g", {"class": "legend"})
    for i, (name, points) in enumerate(data):
        color = PALETTE[i % len(PALETTE)]
        xs, ys = frame.x(points[:, 0]), frame.y(points[:, 1])
        coords = " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))
        ET.SubElement(svg, "polyline", {"points": coords, "fill": "none", "stroke": color,
                                        "stroke-width": "1.5", "data-name": name})
        ly = MARGIN_TOP + 10 + 20 * i
        lx = WIDTH - MARGIN_RIGHT + 15
        ET.SubElement(legend, "line", {"x1": str(lx), "y1": str(ly), "x2": str(lx + 24), "y2": str(ly),
                                       "stroke": color, "stroke-width": "2"})
        _text(legend, lx + 30, ly + 4, name, **{"font-size": "12", "class": "legend-entry"})

    filepath = Path(path)
    ET.ElementTree(svg).write(filepath, encoding="utf-8", xml_declaration=True)
    logger.info(f"Wrote {filepath}")
    return filepath

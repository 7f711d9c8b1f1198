"""Self-contained SVG emission for the three standard figures.

No plotting dependency: these build SVG strings directly so outputs are
byte-deterministic and can be checked by parsing the markup back. Scatter
markers encode the test three ways - shape per controller, size per
fallover outcome, colour per gait phase - and every marker carries data-*
attributes so tools (and tests) can recount what was drawn.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

from .analysis import ScatterDataset, VelocityProfile
from .impactor import CalibrationMap

PHASE_COLORS = {
    "Left_Up": "#1f77b4",
    "Left_Down": "#17becf",
    "Right_Up": "#ff7f0e",
    "Right_Down": "#d62728",
    "Dual_None": "#2ca02c",
}
_FALLBACK_COLOR = "#7f7f7f"

CONTROLLER_SHAPES = {
    "tm_analog": "circle",
    "tl_analog": "square",
    "bb_analog": "triangle",
}
_FALL_SIZE = 9.0     # marker half-size when the subject fell
_RECOVER_SIZE = 4.5

_W, _H = 720, 420
_ML, _MR, _MT, _MB = 70, 30, 30, 60


def _f(v: float) -> str:
    return f"{v:.2f}"


def _marker(shape: str, x: float, y: float, half: float, color: str,
            attrs: str) -> str:
    if shape == "circle":
        return (f'<circle class="marker" cx="{_f(x)}" cy="{_f(y)}" '
                f'r="{_f(half)}" fill="{color}" {attrs}/>')
    if shape == "square":
        return (f'<rect class="marker" x="{_f(x - half)}" y="{_f(y - half)}" '
                f'width="{_f(2 * half)}" height="{_f(2 * half)}" '
                f'fill="{color}" {attrs}/>')
    pts = (f"{_f(x)},{_f(y - half)} {_f(x - half)},{_f(y + half)} "
           f"{_f(x + half)},{_f(y + half)}")
    return (f'<polygon class="marker" points="{pts}" fill="{color}" '
            f'{attrs}/>')


def _axis_frame(title: str, x_label: str, y_label: str) -> List[str]:
    return [
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="#333"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" '
        f'font-size="14">{title}</text>',
        f'<text x="{_W // 2}" y="{_H - 16}" text-anchor="middle" '
        f'font-size="12">{x_label}</text>',
        f'<text x="18" y="{_H // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {_H // 2})">{y_label}</text>',
    ]


def _x_ticks(lo: float, hi: float, n: int = 6) -> List[Tuple[float, float]]:
    span = hi - lo
    out = []
    for i in range(n):
        v = lo + span * i / (n - 1)
        px = _ML + (_W - _ML - _MR) * i / (n - 1)
        out.append((v, px))
    return out


def scatter_svg(dataset: ScatterDataset) -> str:
    """Campaign overview: impact velocity vs controller lane.

    Marker shape encodes the controller, size the fallover outcome and
    colour the gait phase at impact.
    """
    points = dataset.points
    vels = [p.impact_velocity for p in points]
    lo = min(vels) - 0.1 if points else 0.0
    hi = max(vels) + 0.1 if points else 1.0
    if hi - lo < 1e-9:
        hi = lo + 1.0
    lanes = sorted({p.controller_kind for p in points})
    lane_y = {kind: _MT + (_H - _MT - _MB) * (i + 1) / (len(lanes) + 1)
              for i, kind in enumerate(lanes)}

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
             f'height="{_H}" viewBox="0 0 {_W} {_H}">']
    parts += _axis_frame("Impact tests", "impact velocity (m/s)",
                         "controller")
    for v, px in _x_ticks(lo, hi):
        parts.append(f'<line x1="{_f(px)}" y1="{_H - _MB}" x2="{_f(px)}" '
                     f'y2="{_H - _MB + 5}" stroke="#333"/>')
        parts.append(f'<text x="{_f(px)}" y="{_H - _MB + 18}" '
                     f'text-anchor="middle" font-size="10">{v:.2f}</text>')
    for kind, y in lane_y.items():
        parts.append(f'<text x="{_ML - 8}" y="{_f(y + 3)}" '
                     f'text-anchor="end" font-size="10">{kind}</text>')

    span = hi - lo
    for i, p in enumerate(points):
        x = _ML + (_W - _ML - _MR) * (p.impact_velocity - lo) / span
        # deterministic vertical jitter so same-velocity tests stay visible
        y = lane_y[p.controller_kind] + ((i * 37) % 11 - 5) * 2.0
        half = _FALL_SIZE if p.fallover else _RECOVER_SIZE
        color = PHASE_COLORS.get(p.phase, _FALLBACK_COLOR)
        shape = CONTROLLER_SHAPES.get(p.controller_kind, "circle")
        attrs = (f'data-fall="{int(p.fallover)}" '
                 f'data-controller="{p.controller_kind}" '
                 f'data-phase="{p.phase}" data-test="{p.test_id}"')
        parts.append(_marker(shape, x, y, half, color, attrs))

    ly = _MT + 10
    for phase, color in PHASE_COLORS.items():
        parts.append(f'<circle cx="{_W - 150}" cy="{ly}" r="4" '
                     f'fill="{color}"/>')
        parts.append(f'<text x="{_W - 140}" y="{ly + 3}" '
                     f'font-size="9">{phase}</text>')
        ly += 13
    parts.append("</svg>")
    return "\n".join(parts)


def profiles_svg(profiles: Sequence[VelocityProfile],
                 window: float = 0.05) -> str:
    """Ram velocity decay curves aligned at the impact instant."""
    if profiles:
        v_lo = min(min(p.velocities) for p in profiles) - 0.2
        v_hi = max(max(p.velocities) for p in profiles) + 0.2
    else:
        v_lo, v_hi = -1.0, 5.0
    controller_colors = {"tm_analog": "#1f77b4", "tl_analog": "#ff7f0e",
                         "bb_analog": "#2ca02c"}

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
             f'height="{_H}" viewBox="0 0 {_W} {_H}">']
    parts += _axis_frame("Ram velocity after impact", "time since impact (s)",
                         "ram velocity (m/s)")
    for v, px in _x_ticks(0.0, window):
        parts.append(f'<text x="{_f(px)}" y="{_H - _MB + 18}" '
                     f'text-anchor="middle" font-size="10">{v:.3f}</text>')
    if v_lo < 0.0 < v_hi:
        y0 = _H - _MB - (_H - _MT - _MB) * (0.0 - v_lo) / (v_hi - v_lo)
        parts.append(f'<line x1="{_ML}" y1="{_f(y0)}" x2="{_W - _MR}" '
                     f'y2="{_f(y0)}" stroke="#aaa" stroke-dasharray="4 3"/>')

    for p in profiles:
        pts = []
        for t, v in zip(p.times, p.velocities):
            if t > window + 1e-12:
                continue
            x = _ML + (_W - _ML - _MR) * t / window
            y = _H - _MB - (_H - _MT - _MB) * (v - v_lo) / (v_hi - v_lo)
            pts.append(f"{_f(x)},{_f(y)}")
        color = controller_colors.get(p.controller_kind, _FALLBACK_COLOR)
        parts.append(f'<polyline class="profile" points="{" ".join(pts)}" '
                     f'fill="none" stroke="{color}" stroke-width="1.5" '
                     f'data-controller="{p.controller_kind}" '
                     f'data-test="{p.test_id}"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def calibration_svg(samples: Sequence[Tuple[float, float]],
                    calib: CalibrationMap) -> str:
    """Calibration points with the fitted pressure-to-velocity line."""
    ps = [s[0] for s in samples]
    lo, hi = min(ps) - 2, max(ps) + 2
    vs = [s[1] for s in samples] + [calib.slope * lo + calib.intercept,
                                    calib.slope * hi + calib.intercept]
    v_lo, v_hi = min(vs) - 0.2, max(vs) + 0.2

    def sx(p):
        return _ML + (_W - _ML - _MR) * (p - lo) / (hi - lo)

    def sy(v):
        return _H - _MB - (_H - _MT - _MB) * (v - v_lo) / (v_hi - v_lo)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
             f'height="{_H}" viewBox="0 0 {_W} {_H}">']
    parts += _axis_frame(
        f"Pressure calibration (max residual {calib.max_residual:.3f} m/s)",
        "pressure (PSI)", "peak velocity (m/s)")
    parts.append(
        f'<line class="fit" x1="{_f(sx(lo))}" y1="{_f(sy(calib.slope * lo + calib.intercept))}" '
        f'x2="{_f(sx(hi))}" y2="{_f(sy(calib.slope * hi + calib.intercept))}" '
        f'stroke="#d62728" stroke-width="1.5"/>')
    for p, v in samples:
        parts.append(f'<circle class="marker" cx="{_f(sx(p))}" '
                     f'cy="{_f(sy(v))}" r="4" fill="#1f77b4"/>')
    for v, px in _x_ticks(lo, hi):
        parts.append(f'<text x="{_f(px)}" y="{_H - _MB + 18}" '
                     f'text-anchor="middle" font-size="10">{v:.0f}</text>')
    parts.append("</svg>")
    return "\n".join(parts)

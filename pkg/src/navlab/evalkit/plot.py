"""Top-down SVG of a trajectory over the scene occupancy."""
from __future__ import annotations

from xml.sax.saxutils import escape

from ..simworld import Scene, TrajectoryRecord

START_COLOR = "#3cb44b"
GOAL_COLOR = "#ffcba4"
PATH_COLOR = "#f58231"


def render_topdown(traj: TrajectoryRecord, scene: Scene | None = None, goal_radius: float = 1.0,
                   scale: float = 40.0) -> str:
    """SVG document: occupied cells, goal-radius circle, green start, peach goal, dashed orange path."""
    ep = traj.episode
    if scene is not None:
        width_m, height_m = scene.size_m
    else:
        xs = [ep.start.x, ep.goal.x] + [s.state.x for s in traj.steps]
        ys = [ep.start.y, ep.goal.y] + [s.state.y for s in traj.steps]
        width_m, height_m = max(xs) + goal_radius + 1, max(ys) + goal_radius + 1
    w, h = width_m * scale, height_m * scale
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" '
           f'viewBox="0 0 {w:.1f} {h:.1f}">',
           f"<title>{escape(ep.episode_id)}</title>",
           f'<rect x="0" y="0" width="{w:.1f}" height="{h:.1f}" fill="white"/>']
    if scene is not None:
        cs = scene.cell_size * scale
        out.append('<g id="occupancy" fill="#404040">')
        for r, c in zip(*scene.occupancy.nonzero()):
            out.append(f'<rect x="{c * cs:.2f}" y="{r * cs:.2f}" width="{cs:.2f}" height="{cs:.2f}"/>')
        out.append("</g>")
    gx, gy = ep.goal.x * scale, ep.goal.y * scale
    out.append(f'<circle id="goal-radius" cx="{gx:.2f}" cy="{gy:.2f}" r="{goal_radius * scale:.2f}" '
               f'fill="none" stroke="{GOAL_COLOR}" stroke-width="2"/>')
    sq = 0.3 * scale
    out.append(f'<rect id="goal" x="{gx - sq / 2:.2f}" y="{gy - sq / 2:.2f}" width="{sq:.2f}" height="{sq:.2f}" '
               f'fill="{GOAL_COLOR}" stroke="black"/>')
    sx, sy = ep.start.x * scale, ep.start.y * scale
    out.append(f'<rect id="start" x="{sx - sq / 2:.2f}" y="{sy - sq / 2:.2f}" width="{sq:.2f}" height="{sq:.2f}" '
               f'fill="{START_COLOR}" stroke="black"/>')
    pts = [traj.initial.state.position] + [s.state.position for s in traj.steps]
    if len(pts) > 1:
        coords = " ".join(f"{x * scale:.2f},{y * scale:.2f}" for x, y in pts)
        out.append(f'<polyline id="path" points="{coords}" fill="none" stroke="{PATH_COLOR}" '
                   f'stroke-width="2" stroke-dasharray="6,4"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

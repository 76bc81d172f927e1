"""Minimal static SVG rendering for learning curves and success bars."""
from xml.sax.saxutils import escape

W, H = 720, 420
MARGIN = 56
PLOT_W = W - 2 * MARGIN
PLOT_H = H - 2 * MARGIN

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _axes(title):
    parts = [
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{MARGIN}" y1="{H - MARGIN}" x2="{W - MARGIN}" '
        f'y2="{H - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" '
        f'y2="{H - MARGIN}" stroke="black"/>',
        f'<text x="{W / 2:.1f}" y="24" text-anchor="middle" '
        f'font-size="16">{escape(title)}</text>',
        f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle" '
        f'font-size="12">episode</text>',
        f'<text x="16" y="{H / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {H / 2:.1f})">success rate</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        y = H - MARGIN - frac * PLOT_H
        parts.append(f'<text x="{MARGIN - 8}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-size="10">{frac:.1f}</text>')
    return parts


def _x(episode, max_ep):
    return MARGIN + (episode / max_ep if max_ep else 0.0) * PLOT_W


def _y(rate):
    return H - MARGIN - max(0.0, min(1.0, rate)) * PLOT_H


def render_curves(series, title="learning curves"):
    """SVG text: one polyline per named (episode, success) series."""
    parts = _axes(title)
    max_ep = max((ep for pts in series.values() for ep, _ in pts), default=1)
    for i, (name, pts) in enumerate(sorted(series.items())):
        if not pts:
            continue
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_x(ep, max_ep):.1f},{_y(r):.1f}" for ep, r in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{coords}"/>')
        parts.append(f'<text x="{W - MARGIN + 4}" y="{MARGIN + 14 * i + 10}" '
                     f'font-size="10" fill="{color}">{escape(name)}</text>')
    body = "\n".join(parts)
    return (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}">\n{body}\n</svg>\n')


def render_metrics(rows, title="learning curves"):
    """Eval rows become per-task polylines; train rows are ignored."""
    series = {}
    for row in rows:
        if row.phase == "eval":
            series.setdefault(row.task, []).append((row.episode, row.success_rate))
    for pts in series.values():
        pts.sort()
    return render_curves(series, title=title)

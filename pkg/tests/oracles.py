"""Brute-force reference implementations used by eval and acceptance tests.

These stay deliberately independent of the production hull/AUC code paths:
membership by chord enumeration, area by a separately written integral.
"""

import itertools


def brute_hull(points):
    """Undominated points that sit strictly above every chord between two
    other undominated points (endpoints are always vertices)."""
    pts = sorted(set(points))
    undominated = [
        p
        for p in pts
        if not any(q != p and q[0] <= p[0] and q[1] >= p[1] for q in pts)
    ]
    hull = []
    for p in undominated:
        below = False
        for a, b in itertools.combinations(undominated, 2):
            if a[0] < p[0] < b[0]:
                chord = a[1] + (b[1] - a[1]) * (p[0] - a[0]) / (b[0] - a[0])
                if p[1] <= chord:
                    below = True
                    break
        if not below:
            hull.append(p)
    return hull


def brute_area(hull_pts, score_scale, cost_scale):
    """Trapezoid area under the normalized hull, written out independently."""
    pts = [(c / cost_scale, s / score_scale * 100.0) for c, s in hull_pts]
    total = 0.0
    for (c1, s1), (c2, s2) in zip(pts, pts[1:]):
        lo, hi = c1, min(c2, 1.0)
        if hi <= lo:
            break
        s_hi = s1 + (s2 - s1) * (hi - c1) / (c2 - c1)
        total += (hi - lo) * (s1 + s_hi) / 2.0
    last_c, last_s = pts[-1]
    if last_c < 1.0:
        total += (1.0 - last_c) * last_s
    return total

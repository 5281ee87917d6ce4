"""Composite Gauss-Legendre quadrature used by the numeric operator oracle."""

from __future__ import annotations

import numpy as np

DEFAULT_PANELS = 8
POINTS_PER_PANEL = 16

_GL_CACHE = {}


def gl_rule(npts):
    if npts not in _GL_CACHE:
        _GL_CACHE[npts] = np.polynomial.legendre.leggauss(npts)
    return _GL_CACHE[npts]


def panel_nodes(lo, hi, panels=DEFAULT_PANELS, npts=POINTS_PER_PANEL):
    """Nodes and weights of composite Gauss-Legendre panels on [lo, hi]."""
    if hi <= lo:
        return np.empty(0), np.empty(0)
    x, w = gl_rule(npts)
    edges = np.linspace(lo, hi, panels + 1)
    nodes, weights = [], []
    for k in range(panels):
        half = 0.5 * (edges[k + 1] - edges[k])
        mid = 0.5 * (edges[k + 1] + edges[k])
        nodes.append(mid + half * x)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def l2_inner(u, v, domain, panels=DEFAULT_PANELS):
    """L2 inner product of two callables returning scalars or vectors."""
    nodes, weights = panel_nodes(domain[0], domain[1], panels)
    total = 0.0
    for s, w in zip(nodes, weights):
        total += w * float(np.dot(np.atleast_1d(u(s)), np.atleast_1d(v(s))))
    return total


def l2_norm(u, domain, panels=DEFAULT_PANELS):
    return np.sqrt(max(l2_inner(u, u, domain, panels), 0.0))

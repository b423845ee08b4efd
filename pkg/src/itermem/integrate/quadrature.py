"""Tensor Gauss-Legendre quadrature over D_rho via the Duffy collapse.

Per observer the ordered chain is split along the membrane's smooth grid.
Each run of slots sharing a grid interval ``[a, b]`` is an order simplex,
reached from the cube by ``x_m = u_m, x_k = x_{k+1} u_k`` with Jacobian
``prod_k u_k^{k-1}``. Observers are combined by tensor product.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from ..combinatorics import ObserverPermutations, var_index
from .exact_engine import slot_assignments

MAX_QUADRATURE_DIM = 8
_CHUNK = 1 << 18


@lru_cache(maxsize=None)
def gauss_legendre_01(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    return (x + 1) / 2, w / 2


@lru_cache(maxsize=None)
def duffy_simplex_rule(m: int, q: int):
    """Nodes ``(q**m, m)`` and weights for ``0 < x_1 < ... < x_m < 1``."""
    if m == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = gauss_legendre_01(q)
    u = np.array(list(itertools.product(x, repeat=m)))
    wu = np.prod(np.array(list(itertools.product(w, repeat=m))), axis=1)
    nodes = np.empty_like(u)
    nodes[:, m - 1] = u[:, m - 1]
    for k in range(m - 2, -1, -1):
        nodes[:, k] = nodes[:, k + 1] * u[:, k]
    jac = np.ones(u.shape[0])
    for k in range(1, m):
        jac *= u[:, k] ** k
    return nodes, wu * jac


def refine(breakpoints, depth: int):
    """Split each smooth-grid interval into ``2**(depth-1)`` equal pieces.

    Returns the refined per-axis bounds and, per refined interval, the index of
    the original grid interval containing it.
    """
    pieces = 2 ** (depth - 1)
    out, owners = [], []
    for bp in breakpoints:
        edges = [0.0] + [float(b) for b in bp] + [1.0]
        bounds, owner = [0.0], []
        for j, (a, b) in enumerate(zip(edges, edges[1:])):
            for k in range(1, pieces + 1):
                bounds.append(a + (b - a) * k / pieces)
                owner.append(j)
        out.append(bounds)
        owners.append(owner)
    return out, owners


def _observer_rule(assignment, bounds, q):
    """Quadrature on one observer's chain for a fixed interval assignment.

    Returns nodes of shape ``(M, s)`` in slot order and weights ``(M,)``.
    """
    groups = []
    for j, run in itertools.groupby(range(len(assignment)), key=lambda k: assignment[k]):
        run = list(run)
        a, b = bounds[j], bounds[j + 1]
        nodes, weights = duffy_simplex_rule(len(run), q)
        groups.append((a + (b - a) * nodes, weights * (b - a) ** len(run)))
    nodes = np.zeros((1, 0))
    weights = np.ones(1)
    for gn, gw in groups:
        nodes = np.concatenate([np.repeat(nodes, gn.shape[0], axis=0),
                                np.tile(gn, (nodes.shape[0], 1))], axis=1)
        weights = np.outer(weights, gw).ravel()
    return nodes, weights


def _fsum(values):
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return complex(math.fsum(values.real), math.fsum(values.imag))
    return math.fsum(values)


def quadrature_sum(density, rho: ObserverPermutations, q: int, breakpoints=None, depth: int = 1,
                   null_cell=None):
    """Raw quadrature value of ``int_{D_rho} density`` at order q.

    ``density`` maps ``(N, sn)`` event-major points to values. ``null_cell``,
    when given, says a membrane grid cell carries zero density; pieces that put
    any event into such a cell are skipped.
    """
    n, s = rho.n, rho.s
    sn = n * s
    if sn == 0:
        return 1.0
    if breakpoints is None:
        breakpoints = [()] * n
    bounds, owners = refine(breakpoints, depth)
    slots = rho.slots
    columns = [[var_index(p(k), nu, n) for k in range(1, s + 1)] for nu, p in enumerate(rho, start=1)]
    per_observer = [list(slot_assignments(len(b) - 1, s)) for b in bounds]
    rules = {}
    partial = []
    for combo in itertools.product(*per_observer):
        if null_cell is not None:
            skip = False
            for sigma in range(1, s + 1):
                cell = tuple(owners[nu][combo[nu][slots[nu][sigma - 1] - 1]] for nu in range(n))
                if null_cell(cell):
                    skip = True
                    break
            if skip:
                continue
        obs = []
        for nu in range(n):
            key = (nu, combo[nu])
            if key not in rules:
                rules[key] = _observer_rule(combo[nu], bounds[nu], q)
            obs.append(rules[key])
        partial.append(_tensor_sum(density, obs, columns, sn))
    return _fsum(partial) if partial else 0.0


def _tensor_sum(density, obs, columns, sn):
    sizes = [o[0].shape[0] for o in obs]
    rest = int(np.prod(sizes[1:])) if len(sizes) > 1 else 1
    first_nodes, first_w = obs[0]
    block = max(1, _CHUNK // rest)
    parts = []
    for start in range(0, sizes[0], block):
        stop = min(start + block, sizes[0])
        local = [(first_nodes[start:stop], first_w[start:stop])] + list(obs[1:])
        grids = np.meshgrid(*[np.arange(o[0].shape[0]) for o in local], indexing="ij")
        count = grids[0].size
        pts = np.empty((count, sn))
        weights = np.ones(count)
        for nu, (nodes, w) in enumerate(local):
            idx = grids[nu].ravel()
            pts[:, columns[nu]] = nodes[idx]
            weights = weights * w[idx]
        parts.append(_fsum(weights * np.asarray(density(pts))))
    return _fsum(parts)

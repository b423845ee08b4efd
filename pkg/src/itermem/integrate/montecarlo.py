"""Plain Monte-Carlo over the cube, used as an independent oracle."""
from __future__ import annotations

import math

import numpy as np

from ..combinatorics import DomainDescriptor, ObserverPermutations, indicator_array


def montecarlo_sum(density, rho: ObserverPermutations, samples: int, seed: int):
    """Mean and standard error of ``1_{D_rho} * density`` under uniform sampling of ``I^{sn}``.

    Points come from ``numpy.random.default_rng(seed)``; the reduction is a
    compensated sum in sample order, so a given seed replays bit for bit.
    """
    sn = rho.n * rho.s
    rng = np.random.default_rng(seed)
    points = rng.random((samples, sn))
    inside = indicator_array(DomainDescriptor.of(rho), points)
    raw = np.asarray(density(points[inside])) if inside.any() else np.zeros(0)
    values = np.zeros(samples, dtype=np.complex128 if np.iscomplexobj(raw) else np.float64)
    values[inside] = raw
    if np.iscomplexobj(values):
        mean = complex(math.fsum(values.real), math.fsum(values.imag)) / samples
        var = _variance(values.real) + _variance(values.imag)
    else:
        mean = math.fsum(values) / samples
        var = _variance(values)
    return mean, math.sqrt(var / samples), int(inside.sum())


def _variance(x):
    n = x.shape[0]
    if n < 2:
        return 0.0
    mean = math.fsum(x) / n
    return math.fsum((x - mean) ** 2) / (n - 1)

"""Permutations, shuffle sets and the ordered integration domains.

Conventions used throughout the package:

* Permutations are 1-indexed in one-line notation. For an observer,
  ``rho.images[k-1]`` is the event that observer sees in the k-th time slot,
  so ``rho = (3, 1, 2)`` means the order e3, e1, e2.
* Points of ``I^{sn}`` are laid out event-major:
  ``(t_1^1, ..., t_n^1, t_1^2, ..., t_n^s)``.
* ``D_rho`` is the set of points with ``0 < t_nu^{rho_nu(1)} < ... < t_nu^{rho_nu(s)} < 1``
  for every observer ``nu``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np


class PermutationError(ValueError):
    pass


@dataclass(frozen=True)
class Permutation:
    images: tuple

    def __post_init__(self):
        images = tuple(int(i) for i in self.images)
        if sorted(images) != list(range(1, len(images) + 1)):
            raise PermutationError(f"{list(self.images)} is not a permutation of 1..{len(images)}")
        object.__setattr__(self, "images", images)

    @classmethod
    def identity(cls, s: int) -> Permutation:
        return cls(tuple(range(1, s + 1)))

    @classmethod
    def all(cls, s: int):
        for images in itertools.permutations(range(1, s + 1)):
            yield cls(images)

    @property
    def size(self) -> int:
        return len(self.images)

    def __call__(self, i: int) -> int:
        return self.images[i - 1]

    def __len__(self):
        return len(self.images)

    def compose(self, other: Permutation) -> Permutation:
        """``(self o other)(i) = self(other(i))``."""
        if other.size != self.size:
            raise PermutationError("cannot compose permutations of different sizes")
        return Permutation(tuple(self(other(i)) for i in range(1, self.size + 1)))

    __matmul__ = compose

    def inverse(self) -> Permutation:
        inv = [0] * self.size
        for i, image in enumerate(self.images, start=1):
            inv[image - 1] = i
        return Permutation(tuple(inv))

    def parity(self) -> int:
        return parity(self)

    def is_identity(self) -> bool:
        return self.images == tuple(range(1, self.size + 1))

    def __repr__(self):
        return f"Permutation{self.images}"


def parity(p: Permutation) -> int:
    """Sign of ``p``: ``(-1)**(number of inversions)``."""
    images = p.images
    inversions = sum(1 for i, j in itertools.combinations(range(len(images)), 2)
                     if images[i] > images[j])
    return -1 if inversions % 2 else 1


def direct_sum(p: Permutation, q: Permutation) -> Permutation:
    """The block permutation ``(p, q)`` on ``len(p) + len(q)`` letters."""
    s = p.size
    return Permutation(p.images + tuple(s + i for i in q.images))


@dataclass(frozen=True)
class ObserverPermutations:
    """One event order per observer: ``rho = (rho_1, ..., rho_n)``."""

    perms: tuple

    def __post_init__(self):
        perms = tuple(p if isinstance(p, Permutation) else Permutation(tuple(p))
                      for p in self.perms)
        if not perms:
            raise PermutationError("need at least one observer")
        sizes = {p.size for p in perms}
        if len(sizes) != 1:
            raise PermutationError(f"observers disagree on the number of events: {sorted(sizes)}")
        object.__setattr__(self, "perms", perms)

    @classmethod
    def identity(cls, n: int, s: int) -> ObserverPermutations:
        return cls(tuple(Permutation.identity(s) for _ in range(n)))

    @classmethod
    def of(cls, *perms) -> ObserverPermutations:
        return cls(tuple(perms))

    @classmethod
    def all(cls, n: int, s: int):
        for combo in itertools.product(list(Permutation.all(s)), repeat=n):
            yield cls(combo)

    @property
    def n(self) -> int:
        return len(self.perms)

    @property
    def s(self) -> int:
        return self.perms[0].size

    def __getitem__(self, nu):
        return self.perms[nu]

    def __iter__(self):
        return iter(self.perms)

    def inverse(self) -> ObserverPermutations:
        return ObserverPermutations(tuple(p.inverse() for p in self.perms))

    def is_identity(self) -> bool:
        return all(p.is_identity() for p in self.perms)

    @cached_property
    def slots(self) -> tuple:
        """``slots[nu][sigma-1]``: the time slot in which observer nu sees event sigma."""
        return tuple(p.inverse().images for p in self.perms)

    def to_lists(self) -> list:
        return [list(p.images) for p in self.perms]


@dataclass(frozen=True)
class DomainDescriptor:
    n: int
    s: int
    rho: ObserverPermutations

    def __post_init__(self):
        if self.rho.n != self.n or self.rho.s != self.s:
            raise PermutationError(
                f"rho has shape (n={self.rho.n}, s={self.rho.s}), expected ({self.n}, {self.s})")

    @classmethod
    def of(cls, rho: ObserverPermutations) -> DomainDescriptor:
        return cls(rho.n, rho.s, rho)


def var_index(sigma: int, nu: int, n: int) -> int:
    """0-based position of ``t_nu^sigma`` (both 1-based) in the event-major layout."""
    return (sigma - 1) * n + (nu - 1)


def shuffles(s: int, s_prime: int) -> list:
    """All (s, s')-shuffles: permutations increasing on 1..s and on s+1..s+s'."""
    if s < 0 or s_prime < 0:
        raise PermutationError("shuffle sizes must be non-negative")
    total = s + s_prime
    out = []
    for first in itertools.combinations(range(1, total + 1), s):
        rest = [i for i in range(1, total + 1) if i not in first]
        out.append(Permutation(tuple(first) + tuple(rest)))
    return out


def rho_shuffles(rho: ObserverPermutations, rho_prime: ObserverPermutations) -> list:
    """Per-observer interleavings of the event orders of ``rho`` and ``rho_prime``.

    Observer nu gets ``(rho_nu, rho'_nu) o tau^{-1}`` for every (s, s')-shuffle
    tau: the word ``rho_nu`` and the shifted word ``s + rho'_nu`` merged with
    the positions chosen by tau. The result is the product over observers,
    ``C(s+s', s) ** n`` elements, in lexicographic order of the tau tuples.
    """
    if rho.n != rho_prime.n:
        raise PermutationError(f"observer counts differ: {rho.n} vs {rho_prime.n}")
    taus = shuffles(rho.s, rho_prime.s)
    per_observer = []
    for p, q in zip(rho, rho_prime):
        block = direct_sum(p, q)
        per_observer.append([block.compose(tau.inverse()) for tau in taus])
    return [ObserverPermutations(combo) for combo in itertools.product(*per_observer)]


def shuffle_sign(sigma: ObserverPermutations, rho: ObserverPermutations,
                 rho_prime: ObserverPermutations) -> int:
    """Product over observers of the parity of the shuffle tau_nu behind sigma_nu."""
    sign = 1
    for sig, p, q in zip(sigma, rho, rho_prime):
        sign *= parity(sig) * parity(p) * parity(q)
    return sign


def is_rho_shuffle(sigma: ObserverPermutations, rho: ObserverPermutations,
                   rho_prime: ObserverPermutations) -> bool:
    """Membership test: each sigma_nu lists the events of rho_nu in rho_nu's order
    and the events of rho'_nu (shifted by s) in rho'_nu's order.

    With ``pos = sigma_nu^{-1}`` (event -> slot) this reads
    ``pos(rho(1)) < ... < pos(rho(s))`` and ``pos(s+rho'(1)) < ... < pos(s+rho'(s'))``.
    """
    s = rho.s
    for sig, p, q in zip(sigma, rho, rho_prime):
        pos = sig.inverse()
        first = [pos(p(k)) for k in range(1, s + 1)]
        second = [pos(s + q(k)) for k in range(1, q.size + 1)]
        if first != sorted(first) or second != sorted(second):
            return False
    return True


def phi_index(sigma: int, rho: ObserverPermutations) -> tuple:
    """Superscripts ``(k_1, ..., k_n)`` of the coordinates carrying event sigma.

    Event sigma is seen by observer nu in slot ``rho_nu^{-1}(sigma)``.
    """
    if not 1 <= sigma <= rho.s:
        raise PermutationError(f"event {sigma} out of range 1..{rho.s}")
    return tuple(slots[sigma - 1] for slots in rho.slots)


def indicator(d: DomainDescriptor, point) -> bool:
    """True iff ``point`` (length sn, event-major) lies in the open domain D_rho."""
    point = list(point)
    if len(point) != d.n * d.s:
        raise PermutationError(f"point has length {len(point)}, expected {d.n * d.s}")
    for nu, p in enumerate(d.rho, start=1):
        chain = [0.0] + [point[var_index(p(k), nu, d.n)] for k in range(1, d.s + 1)] + [1.0]
        if any(not a < b for a, b in zip(chain, chain[1:])):
            return False
    return True


def indicator_array(d: DomainDescriptor, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`indicator` over rows of a ``(N, sn)`` array."""
    points = np.asarray(points)
    mask = np.ones(points.shape[0], dtype=bool)
    for nu, p in enumerate(d.rho, start=1):
        prev = np.zeros(points.shape[0])
        for k in range(1, d.s + 1):
            cur = points[:, var_index(p(k), nu, d.n)]
            mask &= prev < cur
            prev = cur
        mask &= prev < 1.0
    return mask


def wedge_sign(rho: ObserverPermutations) -> int:
    """Sign of the reordering that brings the wedge of the reindexed event forms
    into the canonical event-major orientation of ``I^{sn}``.

    Observer nu's differentials are permuted among themselves by rho_nu, so the
    sign is the product of the observer parities. It is recomputed here from the
    explicit slot sequence as a check of that product formula.
    """
    n, s = rho.n, rho.s
    sequence = []
    for sigma in range(1, s + 1):
        for nu, k in enumerate(phi_index(sigma, rho), start=1):
            sequence.append(var_index(k, nu, n) + 1)
    return parity(Permutation(tuple(sequence))) if sequence else 1


def shuffle_count(s: int, s_prime: int, n: int = 1) -> int:
    return comb(s + s_prime, s) ** n

"""Axis-aligned hypercube algebra for Context agent activation zones.

Zones live in the normalized feature space. Intervals are closed on both
ends. Operations that can shrink a zone to nothing (``push`` and
``exclude_point``) return ``None`` to signal that the zone is destroyed.

Bounds are stored as tuples of floats: dimensions are small and plain
Python arithmetic beats numpy dispatch at this size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

#: Margin used when carving a point out of a zone.
EXCLUSION_EPS = 1e-6

# Relative tolerance under which two candidate cuts count as a tie.
_TIE_RTOL = 1e-12


class DimensionError(ValueError):
    """Raised when a box and a point (or two boxes) disagree on dimension."""


@dataclass(frozen=True)
class Hypercube:
    """Closed axis-aligned box ``[lower[j], upper[j]]`` in every dimension."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise DimensionError(f"bad bound lengths {len(lo)} / {len(hi)}")
        if not all(math.isfinite(v) for v in lo + hi):
            raise ValueError("hypercube bounds must be finite")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("hypercube needs strictly positive width on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def around(cls, center: Sequence[float], radius: float) -> "Hypercube":
        return cls([c - radius for c in center], [c + radius for c in center])

    @classmethod
    def _trusted(cls, lower: tuple, upper: tuple) -> "Hypercube":
        # skips validation; only for bounds derived from an already valid box
        h = object.__new__(cls)
        object.__setattr__(h, "lower", lower)
        object.__setattr__(h, "upper", upper)
        return h

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def center(self) -> tuple:
        return tuple((a + b) / 2.0 for a, b in zip(self.lower, self.upper))

    @property
    def widths(self) -> tuple:
        return tuple(b - a for a, b in zip(self.lower, self.upper))


def _point(h: Hypercube, x) -> tuple:
    x = tuple(float(v) for v in x)
    if len(x) != h.dim:
        raise DimensionError(f"dimension mismatch: box {h.dim} vs point {len(x)}")
    return x


def _check_pair(a: Hypercube, b: Hypercube) -> None:
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")


def volume(h: Hypercube) -> float:
    return math.prod(b - a for a, b in zip(h.lower, h.upper))


def contains(h: Hypercube, x) -> bool:
    x = _point(h, x)
    return all(a <= v <= b for a, v, b in zip(h.lower, x, h.upper))


def intersection_volume(a: Hypercube, b: Hypercube) -> float:
    _check_pair(a, b)
    vol = 1.0
    for alo, ahi, blo, bhi in zip(a.lower, a.upper, b.lower, b.upper):
        side = min(ahi, bhi) - max(alo, blo)
        if side <= 0.0:
            return 0.0
        vol *= side
    return vol


def overlap_index(a: Hypercube, b: Hypercube) -> float:
    """Intersection volume relative to the smaller of the two boxes."""
    inter = intersection_volume(a, b)
    if inter == 0.0:
        return 0.0
    return min(1.0, inter / min(volume(a), volume(b)))


def scale(h: Hypercube, factor: float) -> Hypercube:
    """Rescale ``h`` about its center so that its volume is multiplied by ``factor``.

    Every side is stretched by ``factor ** (1 / p)``.
    """
    if not factor > 0.0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    if factor == 1.0:
        return h
    k = 0.5 * factor ** (1.0 / h.dim)
    lo, hi = [], []
    for a, b in zip(h.lower, h.upper):
        c, half = (a + b) / 2.0, (b - a) * k
        lo.append(c - half)
        hi.append(c + half)
    if not all(a < b for a, b in zip(lo, hi)):
        raise ValueError("scaling collapsed the box")
    return Hypercube._trusted(tuple(lo), tuple(hi))


def _best_cut(candidates) -> Optional[tuple]:
    # candidates arrive ordered by (dim, side); side 0 = lower face
    best = None
    for cand in candidates:
        if best is None or (cand[0] < best[0] and not math.isclose(cand[0], best[0], rel_tol=_TIE_RTOL)):
            best = cand
    return best


def _apply_cut(h: Hypercube, cut) -> Hypercube:
    _, j, side, value = cut
    lo, hi = list(h.lower), list(h.upper)
    if side == 0:
        lo[j] = value
    else:
        hi[j] = value
    return Hypercube._trusted(tuple(lo), tuple(hi))


def push(winner: Hypercube, loser: Hypercube) -> Optional[Hypercube]:
    """Retract ``loser`` out of ``winner`` by moving a single face.

    The face move that removes the least volume from ``loser`` is chosen;
    ties go to the lowest dimension, then to the lower face. Returns
    ``None`` when no single move leaves the loser with positive width.
    """
    if intersection_volume(winner, loser) == 0.0:
        raise ValueError("push requires overlapping boxes")
    widths = loser.widths
    vol = math.prod(widths)
    candidates = []
    for j, (wlo, whi, llo, lhi) in enumerate(zip(winner.lower, winner.upper, loser.lower, loser.upper)):
        others = vol / widths[j]
        # loser's lower face moves up to the winner's upper face
        if whi < lhi:
            candidates.append(((whi - llo) * others, j, 0, whi))
        # loser's upper face moves down to the winner's lower face
        if wlo > llo:
            candidates.append(((lhi - wlo) * others, j, 1, wlo))
    cut = _best_cut(candidates)
    return None if cut is None else _apply_cut(loser, cut)


def exclude_point(h: Hypercube, x, eps: float = EXCLUSION_EPS) -> Optional[Hypercube]:
    """Retract ``h`` so that ``x`` ends up ``eps`` outside it.

    Same single-face, least-volume rule as :func:`push`.
    """
    if not contains(h, x):
        raise ValueError("exclude_point requires a contained point")
    x = _point(h, x)
    widths = h.widths
    vol = math.prod(widths)
    candidates = []
    for j, (lo, hi, v) in enumerate(zip(h.lower, h.upper, x)):
        others = vol / widths[j]
        if v + eps < hi:
            candidates.append(((v + eps - lo) * others, j, 0, v + eps))
        if v - eps > lo:
            candidates.append(((hi - (v - eps)) * others, j, 1, v - eps))
    cut = _best_cut(candidates)
    return None if cut is None else _apply_cut(h, cut)


def bounding_union(a: Hypercube, b: Hypercube) -> Hypercube:
    _check_pair(a, b)
    return Hypercube._trusted(
        tuple(min(p, q) for p, q in zip(a.lower, b.lower)),
        tuple(max(p, q) for p, q in zip(a.upper, b.upper)),
    )


def distance_to_point(h: Hypercube, x) -> float:
    """Euclidean distance from ``x`` to the box; zero for points inside."""
    x = _point(h, x)
    return math.sqrt(sum(max(0.0, a - v, v - b) ** 2 for a, v, b in zip(h.lower, x, h.upper)))

"""The hierarchical group of order M and its ultrametric.

Elements are finitely supported digit sequences ``(x_1, x_2, ...)`` with
``x_i in {0, ..., M-1}``; addition is digitwise mod M.  The norm of ``x`` is
the largest index ``i`` with ``x_i != 0`` (0 for the identity), and
``|x - y|`` is an ultrametric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np


class OrderMismatchError(ValueError):
    """Raised when combining elements of groups with different M."""


def _canonical(digits: Iterable[int], order: int) -> tuple[int, ...]:
    d = list(digits)
    for x in d:
        if not 0 <= x < order:
            raise ValueError(f"digit {x} outside 0..{order - 1}")
    while d and d[-1] == 0:
        d.pop()
    return tuple(d)


@dataclass(frozen=True)
class GroupElement:
    """Immutable element of the hierarchical group of order ``order``.

    ``digits[i]`` is the coordinate at level ``i + 1``.  Trailing zeros are
    stripped on construction, so equality and hashing are structural.
    """

    digits: tuple[int, ...]
    order: int

    def __post_init__(self) -> None:
        if self.order < 2:
            raise ValueError("order M must be >= 2")
        object.__setattr__(self, "digits", _canonical(self.digits, self.order))

    @classmethod
    def zero(cls, order: int) -> GroupElement:
        return cls((), order)

    @classmethod
    def from_digits(cls, digits: Iterable[int], order: int) -> GroupElement:
        return cls(tuple(int(x) for x in digits), order)

    def __add__(self, other: GroupElement) -> GroupElement:
        return add(self, other)

    def __neg__(self) -> GroupElement:
        return negate(self)

    def __sub__(self, other: GroupElement) -> GroupElement:
        return add(self, negate(other))

    def __len__(self) -> int:
        return len(self.digits)

    def digit(self, level: int) -> int:
        """Coordinate at 1-based ``level`` (0 beyond the support)."""
        if level < 1:
            raise ValueError("levels are 1-based")
        return self.digits[level - 1] if level <= len(self.digits) else 0

    @property
    def norm(self) -> int:
        return norm(self)


def add(x: GroupElement, y: GroupElement) -> GroupElement:
    if x.order != y.order:
        raise OrderMismatchError(f"cannot add elements of orders {x.order} and {y.order}")
    m = x.order
    width = max(len(x.digits), len(y.digits))
    a = x.digits + (0,) * (width - len(x.digits))
    b = y.digits + (0,) * (width - len(y.digits))
    return GroupElement(tuple((p + q) % m for p, q in zip(a, b)), m)


def negate(x: GroupElement) -> GroupElement:
    m = x.order
    return GroupElement(tuple((-d) % m for d in x.digits), m)


def norm(x: GroupElement) -> int:
    # canonical form has no trailing zeros, so the support length is the norm
    return len(x.digits)


def distance(x: GroupElement, y: GroupElement) -> int:
    return norm(x - y)


def ball_size(order: int, radius: int) -> int:
    """Number of points within distance ``radius`` of a fixed point: M**L."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return order**radius


def sphere_size(order: int, radius: int) -> int:
    """Number of points at exact distance ``radius >= 1``: (M-1) M**(L-1)."""
    if radius < 1:
        raise ValueError("sphere of radius 0 is not defined (use ball_size(M, 0) == 1)")
    return (order - 1) * order ** (radius - 1)


def sample_sphere(order: int, radius: int, rng: np.random.Generator) -> GroupElement:
    """Uniform draw from the sphere of the given radius around 0."""
    if radius < 1:
        raise ValueError("sphere radius must be >= 1")
    low = rng.integers(0, order, size=radius - 1)
    top = int(rng.integers(1, order))
    return GroupElement(tuple(int(v) for v in low) + (top,), order)


def elements(order: int, width: int) -> Iterator[GroupElement]:
    """All elements supported on the first ``width`` levels (M**width of them)."""
    for code in range(order**width):
        digits = []
        for _ in range(width):
            code, r = divmod(code, order)
            digits.append(r)
        yield GroupElement(tuple(digits), order)


def add_digit_arrays(x: np.ndarray, y: np.ndarray, order: int) -> np.ndarray:
    """Vectorised group addition on ``(..., width)`` digit arrays."""
    return (x + y) % order


def digit_array_norm(x: np.ndarray) -> np.ndarray:
    """Norm of each row of a ``(..., width)`` digit array."""
    nz = x != 0
    width = x.shape[-1]
    # index of the last nonzero digit, 1-based; rows of zeros give 0
    last = width - np.argmax(nz[..., ::-1], axis=-1)
    return np.where(nz.any(axis=-1), last, 0)

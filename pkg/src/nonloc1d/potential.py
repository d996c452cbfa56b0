"""Zeroth-order potentials c(x) sampled on a grid, with their declared assumptions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operator import Grid1D, GridError


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Potential values on a grid plus the negativity record (c0, R0).

    ``c0``/``R0`` state c <= -c0 outside [-R0, R0]; ``r0`` is the inner radius
    used by the odd maximum principle; ``beta0`` is a declared Hoelder exponent
    that is recorded but never verified.
    """

    grid: Grid1D
    values: np.ndarray
    even: bool = False
    c0: float | None = None
    R0: float | None = None
    beta0: float | None = None
    r0: float | None = None
    declared: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.N,):
            raise GridError("potential values do not match the grid")
        if not np.all(np.isfinite(v)):
            raise GridError("potential values must be finite")
        if self.even and np.max(np.abs(v - v[::-1])) > 1e-12 * max(1.0, np.max(np.abs(v))):
            raise GridError("even flag set but values are not symmetric")
        if self.c0 is not None and self.c0 <= 0:
            raise GridError("c0 must be positive")
        if self.R0 is not None and self.R0 <= 0:
            raise GridError("R0 must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: Grid1D, value: float, **kw) -> "PotentialSpec":
        return cls(grid, np.full(grid.N, float(value)), even=True, **kw)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def has_negativity_record(self) -> bool:
        return self.c0 is not None and self.R0 is not None

    def negativity_holds(self) -> bool:
        """c(x_i) <= -c0 on all nodes with |x_i| > R0."""
        if not self.has_negativity_record:
            return False
        out = np.abs(self.grid.x) > self.R0
        return bool(np.all(self.values[out] <= -self.c0))

    def assumptions(self) -> dict:
        d = {"c0": self.c0, "R0": self.R0, "beta0": self.beta0, "r0": self.r0}
        d.update(self.declared)
        return d


def potential_from_function(grid: Grid1D, func, **kw) -> PotentialSpec:
    return PotentialSpec(grid, func(grid.x), **kw)


def infer_negativity(grid: Grid1D, values: np.ndarray, c0: float) -> float | None:
    """Smallest node radius R0 with values <= -c0 on every node beyond it."""
    x = np.abs(grid.x)
    bad = values > -c0
    if not np.any(bad):
        return grid.h
    R0 = float(np.max(x[bad]))
    if R0 >= grid.X:
        return None
    return R0

"""Cross-shaped regions in R^n x R^n, their set identities, and kernel integrals over them.

Regions (for a radius R > 0):

    S    = (|x| < 2R and |y| >= R) or (|x| >= R and |y| < 2R)
    D    = |x - y| <= 4R
    Tx   = |x| < 2R and |x - y| >= 4R          (Ty with x and y exchanged)
    Rx_r = |x| < r  and |x - y| <= 2r          (Ry_r with x and y exchanged)
    S++  = S restricted to x > 0, y > 0        (n = 1 only)

The integrals are computed for n = 1: for fixed x the y-section of every region
is a finite union of intervals, on which the kernel term is integrated exactly
through a radial antiderivative; the outer x-integral is adaptive quadrature
with breakpoints at the kinks (multiples of R).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .kernels import Kernel, tail_mass

REGIONS = ("S", "D", "Tx", "Ty", "Rx", "Ry", "S&D", "S\\D", "S++")
_ALIASES = {"S∩D": "S&D", "S∖D": "S\\D", "S-D": "S\\D", "S⁺⁺": "S++", "Spp": "S++"}


def canonical_region(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in REGIONS:
        raise ValueError(f"unknown region {name!r}")
    return name


@dataclass(frozen=True)
class RegionQuery:
    R: float
    n: int = 1
    region: str = "S"

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(self, "region", canonical_region(self.region))


@dataclass(frozen=True)
class Membership:
    S: bool
    D: bool
    Tx: bool
    Ty: bool
    Rx: bool
    Ry: bool
    S_and_D: bool
    S_minus_D: bool
    Spp: bool | None


def _flags(ax, ay, axy, R):
    S = ((ax < 2 * R) & (ay >= R)) | ((ax >= R) & (ay < 2 * R))
    D = axy <= 4 * R
    Tx = (ax < 2 * R) & (axy >= 4 * R)
    Ty = (ay < 2 * R) & (axy >= 4 * R)
    return S, D, Tx, Ty


def in_Rx(ax, axy, r):
    return (ax < r) & (axy <= 2 * r)


def classify_point(query: RegionQuery, x, y) -> Membership:
    """Membership flags of (x, y) computed literally from the region definitions."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != (query.n,) or y.shape != (query.n,):
        raise ValueError("points must have dimension n")
    R = query.R
    ax, ay, axy = np.linalg.norm(x), np.linalg.norm(y), np.linalg.norm(x - y)
    S, D, Tx, Ty = _flags(ax, ay, axy, R)
    spp = bool(S and x[0] > 0 and y[0] > 0) if query.n == 1 else None
    return Membership(bool(S), bool(D), bool(Tx), bool(Ty), bool(in_Rx(ax, axy, R)),
                      bool(in_Rx(ay, axy, R)), bool(S and D), bool(S and not D), spp)


@dataclass
class IdentityReport:
    R: float
    n: int
    samples: int
    seed: int
    violations: dict
    witnesses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v == 0 for v in self.violations.values())

    def to_json(self) -> dict:
        return {"R": self.R, "n": self.n, "samples": self.samples, "seed": self.seed,
                "violations": self.violations, "witnesses": self.witnesses, "pass": self.passed}


def verify_set_identities(R: float, n: int, samples: int, seed: int) -> IdentityReport:
    """Check on uniform samples from [-8R, 8R]^(2n):

    (a) Tx and Ty are disjoint; (b) S \\ D = Tx u Ty;
    (c) Rx_2R \\ Rx_R  subset S&D  subset (Rx_2R \\ Rx_(2R/3)) u (Ry_2R \\ Ry_(2R/3)).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-8 * R, 8 * R, size=(samples, 2 * n))
    x, y = pts[:, :n], pts[:, n:]
    ax, ay, axy = (np.linalg.norm(v, axis=1) for v in (x, y, x - y))
    S, D, Tx, Ty = _flags(ax, ay, axy, R)
    bad = {
        "disjoint_T": Tx & Ty,
        "S_minus_D": (S & ~D) != (Tx | Ty),
        "inclusion_left": (in_Rx(ax, axy, 2 * R) & ~in_Rx(ax, axy, R)) & ~(S & D),
        "inclusion_right": (S & D) & ~((in_Rx(ax, axy, 2 * R) & ~in_Rx(ax, axy, 2 * R / 3))
                                      | (in_Rx(ay, axy, 2 * R) & ~in_Rx(ay, axy, 2 * R / 3))),
    }
    viol = {k: int(np.count_nonzero(v)) for k, v in bad.items()}
    wit = {k: pts[np.argmax(v)].tolist() for k, v in bad.items() if np.any(v)}
    return IdentityReport(float(R), int(n), int(samples), int(seed), viol, wit)


# ---------------------------------------------------------------------------
# integrals (n = 1)


@dataclass(frozen=True)
class PowerTerm:
    """Pure power |z|^(-exponent) in dimension n (only n = 1 is integrated)."""

    exponent: float
    n: int = 1


class _Radial:
    """Even integrand g(|z|) with an antiderivative P on (0, inf)."""

    def __init__(self, term, R: float, cutoff: bool):
        self.term, self.R, self.cutoff = term, R, cutoff
        if isinstance(term, PowerTerm):
            a = term.exponent
            self._g = lambda r: r ** (-a)
            self._A = lambda r, k: _pow_anti(r, k + 1 - a)
        else:
            self._g = term
            # k = 0 uses the infinity-anchored antiderivative -int_r^inf K to avoid cancellation
            self._A = lambda r, k: (-tail_mass(term, np.asarray(r, dtype=float)) if k == 0
                                    else term.antiderivative(np.asarray(r, dtype=float), k))
        self.integrable_at_zero = cutoff or (isinstance(term, PowerTerm) and term.exponent < 1)

    def g(self, r):
        r = np.abs(r)
        v = self._g(r)
        if self.cutoff:
            v = v * np.minimum(1.0, r / self.R) ** 2
        return v

    def _piece(self, r1, r2):
        # integral of g over [r1, r2] inside one branch of the cutoff
        R = self.R
        if not self.cutoff or r1 >= R:
            hi = 0.0 if math.isinf(r2) and isinstance(self.term, Kernel) else self._A(r2, 0)
            return float(hi - self._A(r1, 0))
        with np.errstate(divide="ignore"):
            return float((self._A(r2, 2) - self._A(r1, 2)) / R**2)

    def span(self, r1, r2):
        """Integral of g over radii [r1, r2], 0 <= r1 <= r2 <= inf."""
        if r2 <= r1:
            return 0.0
        if r1 == 0 and not self.integrable_at_zero:
            raise ValueError("kernel term not integrable at the diagonal on this region")
        if self.cutoff and r1 < self.R < r2:
            return self._piece(r1, self.R) + self._piece(self.R, r2)
        if math.isinf(r2) and isinstance(self.term, PowerTerm):
            return float(-self._A(r1, 0))
        return self._piece(r1, r2)


def _pow_anti(r, b):
    """Antiderivative of r^(b-1); returns 0-anchored form when b > 0, inf-anchored when b < 0."""
    r = np.asarray(r, dtype=float)
    if b == 0:
        return np.log(r)
    with np.errstate(divide="ignore", over="ignore"):
        return r**b / b


def _section(region: str, x: float, R: float):
    """y-intervals (open/closed irrelevant) of the region's section at fixed x."""
    ax = abs(x)
    inf = math.inf
    if ax < R:
        S = [(-inf, -R), (R, inf)]
    elif ax < 2 * R:
        S = [(-inf, inf)]
    else:
        S = [(-2 * R, 2 * R)]
    D = [(x - 4 * R, x + 4 * R)]
    notD = [(-inf, x - 4 * R), (x + 4 * R, inf)]
    if region == "S":
        return S
    if region == "S&D":
        return _intersect(S, D)
    if region == "S\\D":
        return _intersect(S, notD)
    if region == "S++":
        return _intersect(S, [(0.0, inf)]) if x > 0 else []
    raise ValueError(f"integrals not supported on region {region!r}")


def _intersect(A, B):
    out = []
    for a0, a1 in A:
        for b0, b1 in B:
            lo, hi = max(a0, b0), min(a1, b1)
            if hi > lo:
                out.append((lo, hi))
    return out


def _inner(rad: _Radial, x: float, intervals):
    """Integral over y in the intervals of g(|x - y|)."""
    total = 0.0
    for y0, y1 in intervals:
        z0, z1 = x - y1, x - y0  # z = x - y ranges over [z0, z1]
        if z0 >= 0:
            total += rad.span(z0, z1)
        elif z1 <= 0:
            total += rad.span(-z1, -z0)
        else:
            total += rad.span(0.0, -z0) + rad.span(0.0, z1)
    return total


def _inner_plus(term, R, cutoff, x, intervals):
    """Integral over y in the intervals of min{1,|x-y|/R}^2 K(x + y) (quadrature)."""
    kfun = (lambda z: np.abs(z) ** (-term.exponent)) if isinstance(term, PowerTerm) else term

    def f(y):
        v = kfun(x + y)
        if cutoff:
            v = v * min(1.0, abs(x - y) / R) ** 2
        return float(v)

    total = 0.0
    for y0, y1 in intervals:
        pts = [p for p in (x - R, x + R) if y0 < p < y1] if math.isfinite(y1) else None
        if math.isinf(y1):
            mid = max(y0, x + R) + R
            total += integrate.quad(f, y0, mid, points=[p for p in (x - R, x + R) if y0 < p < mid] or None,
                                    epsabs=0, epsrel=1e-11, limit=200)[0]
            total += integrate.quad(f, mid, math.inf, epsabs=0, epsrel=1e-11, limit=200)[0]
        else:
            total += integrate.quad(f, y0, y1, points=pts or None, epsabs=0, epsrel=1e-11, limit=200)[0]
    return total


def _order(term) -> float | None:
    if isinstance(term, Kernel):
        return term.s_lo
    return None


def cross_region_integral(term, R: float, gamma: float, region: str, cutoff: bool = False,
                          truncation: float = 1e3) -> float:
    """Integral of |x|^(2 gamma) [min{1,|x-y|/R}^2] k(x - y) over a region of R x R.

    ``term`` is a Kernel (k = K) or a PowerTerm (k = |z|^-a). Supported regions:
    "S&D", "S\\D", "S" (normally with ``cutoff``) and "S++"; on "S++" the kernel
    term is K(x-y) - K(x+y). The x-integral runs over [0, truncation*R] with
    breakpoints, the remainder over [truncation*R, inf) is added separately.
    """
    region = canonical_region(region)
    if region not in ("S&D", "S\\D", "S", "S++"):
        raise ValueError(f"integrals not supported on region {region!r}")
    if isinstance(term, PowerTerm) and term.n != 1:
        raise ValueError("integrals are implemented for n = 1 only")
    if not R > 0:
        raise ValueError("R must be positive")
    s = _order(term)
    gmax = 0.5 if s is None else min(s, 0.5)
    if not (0.0 <= gamma <= gmax + 1e-15):
        raise ValueError(f"gamma out of range [0, {gmax}]")
    if region in ("S\\D", "S", "S++"):
        # unbounded x-direction: |x|^(2 gamma) k(x) must be integrable at infinity
        decay = (1 + 2 * term.s_lo) if isinstance(term, Kernel) else term.exponent
        if 2 * gamma - decay >= -1:
            raise ValueError("integral diverges at infinity for this gamma")
    rad = _Radial(term, R, cutoff)

    def fx(x):
        val = _inner(rad, x, _section(region, x, R))
        if region == "S++":
            val -= _inner_plus(term, R, cutoff, x, _section(region, x, R))
        return abs(x) ** (2 * gamma) * val

    T = truncation * R
    pts = sorted({k * R for k in (1, 2, 3, 4, 5, 6)} | {2 * R / 3, 4 * R / 3})
    pts = [p for p in pts if p < T]
    opts = dict(epsabs=0, epsrel=1e-10, limit=400)
    head = integrate.quad(fx, 0.0, T, points=pts, **opts)[0]
    tail = integrate.quad(fx, T, math.inf, epsabs=1e-10 * abs(head), epsrel=1e-8, limit=400)[0]
    total = head + tail
    if region != "S++":
        # the region and integrand are invariant under (x, y) -> (-x, -y)
        total *= 2.0
    return float(total)


@dataclass
class ScalingFit:
    slope: float
    intercept: float
    residual: float


def fit_scaling_exponent(pairs) -> ScalingFit:
    """Least-squares slope of log(value) against log(R)."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 3:
        raise ValueError("need at least three (R, value) pairs")
    Rv, v = arr[:, 0], arr[:, 1]
    if np.any(v <= 0) or np.any(Rv <= 0):
        raise ValueError("values and radii must be positive")
    if np.any(np.diff(Rv) <= 0):
        raise ValueError("R must be strictly increasing")
    lx, ly = np.log(Rv), np.log(v)
    (slope, intercept), res, *_ = np.polyfit(lx, ly, 1, full=True)
    resid = float(np.sqrt(res[0] / len(lx))) if len(res) else 0.0
    return ScalingFit(float(slope), float(intercept), resid)


def theory_slope(region: str, s: float, gamma: float, cutoff: bool = False) -> float:
    """Exponent of R in the upper bounds for the pure fractional kernel, n = 1."""
    region = canonical_region(region)
    if region == "S&D":
        return 2 * gamma + 3 - 2 * s
    return 2 * gamma + 1 - 2 * s

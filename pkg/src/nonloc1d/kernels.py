"""Symmetric interaction kernels K(z) for one-dimensional nonlocal operators.

Every kernel is stored as a finite sum of pure power laws ``coef * |z|^(-1-2s)``
or as a tabulated log-log piecewise power law. Both representations admit
exact antiderivatives of ``z^r K(z)`` (r = 0, 1, 2), which is what the
operator discretization and the tail masses are built on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, special


class KernelError(ValueError):
    """Invalid kernel construction or kernel query."""


class SingularEvaluationError(KernelError):
    """Raised when a kernel difference is requested on its singular set."""


@dataclass(frozen=True)
class K2Record:
    """Two-sided power bound lam |z|^(-1-2s) <= K(z) <= Lam |z|^(-1-2s)."""

    lam: float
    Lam: float
    s: float

    def __post_init__(self):
        if not (0.0 < self.s < 1.0):
            raise KernelError("s out of (0,1)")
        if not (0.0 <= self.lam <= self.Lam):
            raise KernelError("need 0 <= lam <= Lam")


@dataclass(frozen=True)
class K3Record:
    """Upper bound K(z) <= Lam1 |z|^(-1-2 s_lo) + Lam2 |z|^(-1-2 s_hi)."""

    Lam1: float
    Lam2: float
    s_lo: float
    s_hi: float

    def __post_init__(self):
        if not (0.0 < self.s_lo <= self.s_hi < 1.0):
            raise KernelError("need 0 < s_lo <= s_hi < 1")
        if self.Lam1 < 0 or self.Lam2 < 0:
            raise KernelError("Lam1, Lam2 must be nonnegative")


def fractional_constant(s: float) -> float:
    """Constant c_{1,s} making c|z|^(-1-2s) the kernel of (-Laplacian)^s in 1-D."""
    if not (0.0 < s < 1.0):
        raise KernelError("s out of (0,1)")
    return 4.0**s * special.gamma(0.5 + s) / (math.sqrt(math.pi) * abs(special.gamma(-s)))


def _powint(z, a):
    # antiderivative of z^(a-1), anchored at z = 1; smooth through a = 0
    z = np.asarray(z, dtype=float)
    lz = np.log(z)
    if a == 0.0:
        return lz
    return np.expm1(a * lz) / a


@dataclass(frozen=True)
class Table:
    """Log-log linear table with power-law extensions at both ends."""

    z: tuple[float, ...]
    values: tuple[float, ...]
    s_small: float
    s_large: float


@dataclass(frozen=True)
class Kernel:
    kind: str
    atoms: tuple[tuple[float, float], ...] = ()
    normalized: bool = False
    monotone: bool = True
    s_lo: float = 0.5
    s_hi: float = 0.5
    k2: K2Record | None = None
    k3: K3Record | None = None
    table: Table | None = field(default=None, repr=False)

    # -- evaluation -----------------------------------------------------------------
    def coefficients(self) -> list[tuple[float, float]]:
        """(s_i, coef_i) pairs with K(z) = sum coef_i |z|^(-1-2 s_i)."""
        out = []
        for s, w in self.atoms:
            c = fractional_constant(s) if self.normalized else 1.0
            out.append((s, w * c))
        return out

    def __call__(self, z):
        z = np.abs(np.asarray(z, dtype=float))
        if self.kind == "tabulated":
            return self._table_eval(z)
        out = np.zeros_like(z)
        for s, c in self.coefficients():
            out = out + c * z ** (-1.0 - 2.0 * s)
        return out

    def antiderivative(self, z, r: int):
        """A function F with F' = z^r K(z) on z > 0; differences give exact moments."""
        z = np.asarray(z, dtype=float)
        if self.kind == "tabulated":
            return self._table_antiderivative(z, r)
        out = np.zeros_like(z)
        for s, c in self.coefficients():
            out = out + c * _powint(z, r - 2.0 * s)
        return out

    def moment(self, a, b, r: int):
        """Integral of z^r K(z) over [a, b] with 0 < a <= b (elementwise)."""
        return self.antiderivative(b, r) - self.antiderivative(a, r)

    def near_moment(self, delta: float) -> float:
        """Exact second moment of K over (0, delta)."""
        if self.kind == "tabulated":
            t = self.table
            z0 = t.z[0]
            c0 = t.values[0] * z0 ** (1.0 + 2.0 * t.s_small)
            e = 2.0 - 2.0 * t.s_small
            if delta <= z0:
                return c0 * delta**e / e
            return c0 * z0**e / e + float(self.moment(z0, delta, 2))
        total = 0.0
        for s, c in self.coefficients():
            total += c * delta ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
        return total

    def far_power_integral(self, a: float, x, p: float):
        """Integral over y in (a, inf) of y^(-p) K(y - x), for |x| < a."""
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) >= a):
            raise KernelError("far integral needs |x| < a")
        if self.kind == "tabulated":
            def integrand(t):
                y = a / t
                return y ** (-p) * self(y - x) * a / (t * t)
            val, _ = integrate.quad_vec(integrand, 0.0, 1.0, epsrel=1e-10, epsabs=0.0)
            return val
        out = np.zeros_like(x)
        for s, c in self.coefficients():
            q = 1.0 + 2.0 * s
            b = p + q - 1.0
            out = out + c * a ** (1.0 - p - q) / b * special.hyp2f1(q, b, p + q, x / a)
        return out

    # -- tabulated internals ---------------------------------------------------------
    def _table_arrays(self):
        t = self.table
        lz = np.log(np.asarray(t.z))
        lk = np.log(np.asarray(t.values))
        slopes = -np.diff(lk) / np.diff(lz)  # local exponent e_k: K ~ z^(-e_k)
        return lz, lk, slopes

    def _table_eval(self, z):
        t = self.table
        lz, lk, _ = self._table_arrays()
        with np.errstate(divide="ignore"):
            lzz = np.log(z)
        out = np.exp(np.interp(lzz, lz, lk))
        lo = lzz < lz[0]
        hi = lzz > lz[-1]
        out = np.where(lo, np.exp(lk[0] - (1 + 2 * t.s_small) * (lzz - lz[0])), out)
        out = np.where(hi, np.exp(lk[-1] - (1 + 2 * t.s_large) * (lzz - lz[-1])), out)
        return out

    def _table_antiderivative(self, z, r):
        t = self.table
        knots = np.asarray(t.z)
        vals = np.asarray(t.values)
        _, _, slopes = self._table_arrays()

        def piece(zz, z0, k0, e):
            # integral from z0 to zz of z^r * k0 (z/z0)^(-e)
            q = r + 1 - np.asarray(e, dtype=float)
            log = np.isclose(q, 0.0, atol=1e-12)
            qs = np.where(log, 1.0, q)
            power = (zz**qs - z0**qs) / qs
            return k0 * z0**e * np.where(log, np.log(zz / z0), power)

        cum = np.zeros(len(knots))
        for k in range(len(knots) - 1):
            cum[k + 1] = cum[k] + piece(knots[k + 1], knots[k], vals[k], slopes[k])
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        idx = np.clip(np.searchsorted(knots, z, side="right") - 1, 0, len(knots) - 2)
        inside = (z >= knots[0]) & (z <= knots[-1])
        zi = z[inside]
        ii = idx[inside]
        out[inside] = cum[ii] + piece(zi, knots[ii], vals[ii], slopes[ii])
        lo = z < knots[0]
        out[lo] = piece(z[lo], knots[0], vals[0], 1 + 2 * t.s_small)
        hi = z > knots[-1]
        out[hi] = cum[-1] + piece(z[hi], knots[-1], vals[-1], 1 + 2 * t.s_large)
        return out

    # -- serialization ---------------------------------------------------------------
    def to_json(self) -> dict:
        d: dict = {"kind": self.kind, "normalized": self.normalized, "monotone": self.monotone}
        if self.kind == "fractional":
            d["s"] = self.atoms[0][0]
        elif self.kind == "mixture":
            d["atoms"] = [{"s": s, "w": w} for s, w in self.atoms]
        else:
            t = self.table
            d["table"] = {"z": list(t.z), "values": list(t.values),
                          "s_small": t.s_small, "s_large": t.s_large}
        return d


def kernel_from_json(d: dict) -> Kernel:
    kind = d.get("kind")
    normalized = bool(d.get("normalized", False))
    if kind == "fractional":
        if "s" not in d:
            raise KernelError("fractional kernel needs field 's'")
        return make_fractional_kernel(float(d["s"]), normalized=normalized)
    if kind == "mixture":
        atoms = [(float(a["s"]), float(a["w"])) for a in d.get("atoms", [])]
        return make_mixture_kernel(atoms, normalized=normalized)
    if kind == "tabulated":
        t = d["table"]
        return make_tabulated_kernel(t["z"], t["values"], t["s_small"], t["s_large"])
    raise KernelError(f"unknown kernel kind {kind!r} (field 'kind')")


def make_fractional_kernel(s: float, normalized: bool = False) -> Kernel:
    """K(z) = c |z|^(-1-2s) with c = 1, or c = c_{1,s} when normalized."""
    if not (0.0 < s < 1.0):
        raise KernelError("s out of (0,1)")
    c = fractional_constant(s) if normalized else 1.0
    return Kernel(kind="fractional", atoms=((float(s), 1.0),), normalized=normalized,
                  monotone=True, s_lo=s, s_hi=s, k2=K2Record(c, c, s))


def make_mixture_kernel(atoms: Sequence[tuple[float, float]], normalized: bool = False) -> Kernel:
    """Superposition sum w_i K_{s_i} of fractional kernels (a discrete order measure)."""
    atoms = tuple((float(s), float(w)) for s, w in atoms)
    if not atoms:
        raise KernelError("mixture needs at least one atom")
    for s, w in atoms:
        if not (0.5 <= s < 1.0):
            raise KernelError(f"mixture atom s={s} out of [1/2,1)")
        if w <= 0:
            raise KernelError("mixture weights must be positive")
    ss = [s for s, _ in atoms]
    k = Kernel(kind="mixture", atoms=atoms, normalized=normalized, monotone=True,
               s_lo=min(ss), s_hi=max(ss))
    lam = sum(c for _, c in k.coefficients())
    k2 = K2Record(lam, lam, ss[0]) if len(set(ss)) == 1 else None
    return Kernel(kind="mixture", atoms=atoms, normalized=normalized, monotone=True,
                  s_lo=min(ss), s_hi=max(ss), k2=k2, k3=K3Record(lam, lam, min(ss), max(ss)))


def make_tabulated_kernel(z, values, s_small: float, s_large: float) -> Kernel:
    """Kernel interpolated log-linearly from samples at increasing z > 0.

    Outside the table the kernel continues as |z|^(-1-2 s_small) near the origin
    and |z|^(-1-2 s_large) at infinity, matched to the end values.
    """
    z = np.asarray(z, dtype=float)
    values = np.asarray(values, dtype=float)
    if z.ndim != 1 or len(z) < 2 or len(z) != len(values):
        raise KernelError("table needs matching 1-D arrays with at least two knots")
    if np.any(z <= 0) or np.any(np.diff(z) <= 0):
        raise KernelError("table knots must be positive and increasing")
    if np.any(values <= 0):
        raise KernelError("tabulated values must be positive")
    for s in (s_small, s_large):
        if not (0.0 < s < 1.0):
            raise KernelError("s out of (0,1)")
    monotone = bool(np.all(np.diff(values) <= 0))
    table = Table(tuple(z.tolist()), tuple(values.tolist()), float(s_small), float(s_large))
    return Kernel(kind="tabulated", normalized=False, monotone=monotone,
                  s_lo=min(s_small, s_large), s_hi=max(s_small, s_large), table=table)


@dataclass
class BoundReport:
    passed: bool
    worst_ratio: float
    witness: float
    violated: str | None
    lower_ratio: float | None = None
    upper_ratio: float | None = None


def bound_samples(samples: int) -> np.ndarray:
    return np.logspace(-6.0, 6.0, int(samples))


def verify_kernel_bounds(kernel: Kernel, claim: K2Record | K3Record, samples: int = 2401) -> BoundReport:
    """Check a claimed power-law envelope on a log-spaced sample set in [1e-6, 1e6].

    For a two-sided claim the ratios K(z)|z|^(1+2s)/lam and K(z)|z|^(1+2s)/Lam
    are reported; for the relaxed upper claim the ratio of K to the envelope.
    """
    if samples < 1:
        raise KernelError("samples must be >= 1")
    z = bound_samples(samples)
    k = kernel(z)
    if isinstance(claim, K2Record):
        r = k * z ** (1.0 + 2.0 * claim.s)
        lower = r / claim.lam if claim.lam > 0 else np.full_like(r, np.inf)
        upper = r / claim.Lam
        i_lo = int(np.argmin(lower))
        i_up = int(np.argmax(upper))
        lo_ok = lower[i_lo] >= 1.0 - 1e-12
        up_ok = upper[i_up] <= 1.0 + 1e-12
        if not lo_ok and (up_ok or 1.0 / lower[i_lo] >= upper[i_up]):
            return BoundReport(False, float(lower[i_lo]), float(z[i_lo]), "lower",
                               float(lower[i_lo]), float(upper[i_up]))
        if not up_ok:
            return BoundReport(False, float(upper[i_up]), float(z[i_up]), "upper",
                               float(lower[i_lo]), float(upper[i_up]))
        # passing: report the side closest to being violated
        if upper[i_up] >= 1.0 / lower[i_lo]:
            return BoundReport(True, float(upper[i_up]), float(z[i_up]), None,
                               float(lower[i_lo]), float(upper[i_up]))
        return BoundReport(True, float(lower[i_lo]), float(z[i_lo]), None,
                           float(lower[i_lo]), float(upper[i_up]))
    if isinstance(claim, K3Record):
        env = claim.Lam1 * z ** (-1.0 - 2.0 * claim.s_lo) + claim.Lam2 * z ** (-1.0 - 2.0 * claim.s_hi)
        ratio = k / env
        i = int(np.argmax(ratio))
        ok = ratio[i] <= 1.0 + 1e-12
        return BoundReport(bool(ok), float(ratio[i]), float(z[i]), None if ok else "upper",
                           None, float(ratio[i]))
    raise KernelError("claim must be a K2Record or K3Record")


def antisymmetrized_value(kernel: Kernel, x, y):
    """K(x - y) - K(x + y) for x, y > 0; nonnegative for monotone kernels."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise KernelError("antisymmetrized kernel needs x, y > 0")
    if np.any(x == y):
        raise SingularEvaluationError("K(x-y) is singular at x = y")
    out = kernel(x - y) - kernel(x + y)
    return float(out) if out.ndim == 0 else out


def tail_mass(kernel: Kernel, x):
    """Mass of K on (x, infinity), x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise KernelError("tail_mass needs x > 0")
    if kernel.kind == "tabulated":
        t = kernel.table
        zl = t.z[-1]
        e = 1.0 + 2.0 * t.s_large
        total = float(kernel.antiderivative(np.array([zl]), 0)[0]) + t.values[-1] * zl / (e - 1.0)
        out = total - kernel.antiderivative(x, 0)
    else:
        out = np.zeros_like(x)
        for s, c in kernel.coefficients():
            out = out + c * x ** (-2.0 * s) / (2.0 * s)
    return float(out) if out.ndim == 0 else out

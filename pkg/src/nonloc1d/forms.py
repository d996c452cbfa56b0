"""Cutoff families and the quotient double integrals J1 / RHS.

For grid functions the double integrals

    J1  =  int int (s(x)-s(y))^2 (t^2(x)+t^2(y)) w(x) w(y) K(x-y)
    RHS = -int int (s^2(x)-s^2(y)) (t^2(x)-t^2(y)) w(x) w(y) K(x-y)

are discretized as h * sum_{i != k} W[|i-k|] F(x_i, x_k), with W the operator
weights (so the singular diagonal is treated by the same second-difference
moment rule). With these weights the algebraic identity

    J1 - RHS = -4 h sum_i t_i^2 s_i (wt_i (L w)_i - w_i (L wt)_i)

holds exactly for the zero-tail discrete operator L, which is what the
Caccioppoli-type check relies on.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel, KernelError
from .operator import GridError, GridFunction, OperatorScheme, TailModel, discrete_operator
from .potential import PotentialSpec

C_ETA = 15.0 / 8.0


def smoothstep_cutoff(t):
    """1 on [0,1], 0 on [2,inf), quintic smoothstep in between (C^2)."""
    t = np.asarray(t, dtype=float)
    u = np.clip(t - 1.0, 0.0, 1.0)
    return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


@dataclass(frozen=True)
class CutoffFamily:
    R: float
    C_eta: float = C_ETA

    def __call__(self, x):
        return smoothstep_cutoff(np.abs(np.asarray(x, dtype=float)) / self.R)

    def lipschitz_bound(self, x, y):
        """C_eta * min{1, |x - y|/R}."""
        return self.C_eta * np.minimum(1.0, np.abs(np.asarray(x) - np.asarray(y)) / self.R)


def make_cutoff(R: float) -> CutoffFamily:
    if not R > 0:
        raise ValueError("cutoff scale must be positive")
    return CutoffFamily(float(R))


def _values(f, grid):
    if isinstance(f, GridFunction):
        if f.grid != grid:
            raise GridError("grid mismatch")
        return f.values
    if isinstance(f, CutoffFamily):
        return f(grid.x)
    v = np.asarray(f, dtype=float)
    if v.shape != (grid.N,):
        raise GridError("grid mismatch")
    return v


def _pair_sums(W, n: int, terms, odd: bool):
    """Sum over unordered pairs (i, k), i < k, of weight(i, k) * term(i-slice, k-slice).

    ``terms`` maps names to callables f(i_slice, k_slice) -> array; returns dict
    of the ordered-pair totals (factor 2 for symmetry). For ``odd`` the weight is
    W[k-i] - W[i+k] with nodes indexed from 1.
    """
    out = {name: 0.0 for name in terms}
    base = 1 if odd else 0
    for m in range(1, n):
        i = slice(0, n - m)
        k = slice(m, n)
        if odd:
            idx = np.arange(n - m) + base
            wt = W[m] - W[2 * idx + m]
        else:
            wt = W[m]
        for name, f in terms.items():
            out[name] += 2.0 * np.sum(wt * f(i, k))
    return out


@dataclass
class FormValues:
    J1: float
    RHS: float


def _setup(sigma, w, tau, kernel: Kernel, odd: bool, scheme, grid=None):
    if grid is None:
        for f in (w, sigma, tau):
            if isinstance(f, GridFunction):
                grid = f.grid
                break
        else:
            raise GridError("pass grid= when no argument is a GridFunction")
    s = _values(sigma, grid)
    wv = _values(w, grid)
    t = _values(tau, grid)
    op = discrete_operator(kernel, grid, scheme or OperatorScheme())
    if odd:
        if not kernel.monotone:
            raise KernelError("odd forms need a monotone kernel")
        c = grid.center
        s, wv, t = s[c + 1 :], wv[c + 1 :], t[c + 1 :]
    return grid, op, s, wv, t


def bilinear_forms(sigma, w, tau, kernel: Kernel, odd: bool = False, *, grid=None,
                   scheme: OperatorScheme | None = None) -> FormValues:
    """Discrete J1 and RHS (half-line with K(x-y) - K(x+y) when ``odd``)."""
    grid, op, s, wv, t = _setup(sigma, w, tau, kernel, odd, scheme, grid)
    t2 = t * t
    s2 = s * s
    terms = {
        "J1": lambda i, k: (s[i] - s[k]) ** 2 * (t2[i] + t2[k]) * wv[i] * wv[k],
        "RHS": lambda i, k: -(s2[i] - s2[k]) * (t2[i] - t2[k]) * wv[i] * wv[k],
    }
    tot = _pair_sums(op.W, len(s), terms, odd)
    return FormValues(grid.h * tot["J1"], grid.h * tot["RHS"])


@dataclass
class CauchySchwarzTerms:
    J1: float
    RHS: float
    J2: float
    diff_term: float
    cross_term: float

    def chain_holds(self, rtol: float = 1e-12) -> bool:
        """RHS <= J2, J2^2 <= diff*cross, diff <= 2 J1 (up to rounding)."""
        eps = rtol * (abs(self.J1) + abs(self.J2) + abs(self.RHS)) + 1e-300
        a = self.RHS <= self.J2 + eps
        b = self.J2**2 <= self.diff_term * self.cross_term * (1 + rtol) + eps**2
        c = self.diff_term <= 2 * self.J1 * (1 + rtol) + eps
        return bool(a and b and c)


def cauchy_schwarz_terms(sigma, w, tau, kernel: Kernel, odd: bool = False, *, grid=None,
                         scheme: OperatorScheme | None = None) -> CauchySchwarzTerms:
    """The quantities of the Cauchy-Schwarz chain J1 <= J2, J2^2 <= 2 J1 * cross."""
    grid, op, s, wv, t = _setup(sigma, w, tau, kernel, odd, scheme, grid)
    t2 = t * t
    s2 = s * s
    terms = {
        "J1": lambda i, k: (s[i] - s[k]) ** 2 * (t2[i] + t2[k]) * wv[i] * wv[k],
        "RHS": lambda i, k: -(s2[i] - s2[k]) * (t2[i] - t2[k]) * wv[i] * wv[k],
        "J2": lambda i, k: np.abs((s[i] - s[k]) * (s[i] + s[k]) * (t[i] - t[k]) * (t[i] + t[k])) * wv[i] * wv[k],
        "diff": lambda i, k: (s[i] - s[k]) ** 2 * (t[i] + t[k]) ** 2 * wv[i] * wv[k] * (t[i] != t[k]),
        "cross": lambda i, k: (s[i] + s[k]) ** 2 * (t[i] - t[k]) ** 2 * wv[i] * wv[k],
    }
    tot = {k: grid.h * v for k, v in _pair_sums(op.W, len(s), terms, odd).items()}
    return CauchySchwarzTerms(tot["J1"], tot["RHS"], tot["J2"], tot["diff"], tot["cross"])


@dataclass
class CaccioppoliReport:
    J1: float
    RHS: float
    premise_pos: float
    premise_neg: float
    verdict: str
    R: float
    tol: float
    scale: float
    premises_hold: bool

    def to_json(self) -> dict:
        return {"J1": self.J1, "RHS": self.RHS, "premise_pos": self.premise_pos,
                "premise_neg": self.premise_neg, "verdict": self.verdict, "R": self.R,
                "tol": self.tol, "scale": self.scale, "premises_hold": self.premises_hold}


def zero_tail_apply(kernel: Kernel, values: np.ndarray, grid, scheme=None) -> np.ndarray:
    op = discrete_operator(kernel, grid, scheme or OperatorScheme())
    return op.apply(values, TailModel())


def caccioppoli_check(w: GridFunction, wt: GridFunction, kernel: Kernel, c: PotentialSpec, R: float,
                      odd: bool = False, scheme: OperatorScheme | None = None,
                      rel_floor: float = 1e-10, premise_rtol: float = 1e-8) -> CaccioppoliReport:
    """Evaluate both forms with tau = eta_R and compare them against the premise residuals.

    Premises w (Lw - cw) >= 0 and wt (L wt - c wt) <= 0 are measured on the
    support of the cutoff with the zero-tail operator (the same weights as the
    forms). Their wrong-signed parts bound J1 - RHS from above:

        tol = 4 h sum tau^2 (sigma^2 [w(Lw-cw)]^- + [wt(Lwt-cwt)]^+) + rel_floor * scale,

    where scale = |J1| + |RHS| + h sum W (sigma_i^2 + sigma_k^2)|tau_i^2 - tau_k^2||w_i w_k|,
    the size of the cancelling terms in RHS (the level at which rounding enters).
    Verdict: EQUALITY if |J1 - RHS| <= tol, INEQUALITY-HOLDS if J1 < RHS - tol,
    VIOLATED otherwise. ``premises_hold`` compares the wrong-signed parts with
    ``premise_rtol`` times (|w|^2 + |wt|^2)_inf (1 + |c|_inf).
    """
    grid = w.grid
    if wt.grid != grid or c.grid != grid:
        raise GridError("grid mismatch")
    wv, wtv = w.values, wt.values
    x = grid.x
    pos = x > 0 if odd else np.ones(grid.N, dtype=bool)
    if np.any(np.abs(wv[pos]) <= 1e-12 * np.max(np.abs(wv))):
        raise GridError("w vanishes on the grid; quotient undefined")
    sigma = np.zeros(grid.N)
    sigma[pos] = wtv[pos] / wv[pos]
    tau = make_cutoff(R)
    tv = tau(x)
    g, op, s, wh, t = _setup(sigma, wv, tv, kernel, odd, scheme, grid)
    t2, s2 = t * t, s * s
    terms = {
        "J1": lambda i, k: (s[i] - s[k]) ** 2 * (t2[i] + t2[k]) * wh[i] * wh[k],
        "RHS": lambda i, k: -(s2[i] - s2[k]) * (t2[i] - t2[k]) * wh[i] * wh[k],
        "mag": lambda i, k: (s2[i] + s2[k]) * np.abs((t2[i] - t2[k]) * wh[i] * wh[k]),
    }
    tot = {k: grid.h * v for k, v in _pair_sums(op.W, len(s), terms, odd).items()}
    J1, RHS = tot["J1"], tot["RHS"]
    rw = wv * (zero_tail_apply(kernel, wv, grid, scheme) - c.values * wv)
    rwt = wtv * (zero_tail_apply(kernel, wtv, grid, scheme) - c.values * wtv)
    t2f = tv**2
    supp = (t2f > 0) & pos
    neg_w = np.maximum(-rw, 0.0)
    pos_wt = np.maximum(rwt, 0.0)
    premise_pos = float(np.max(neg_w[supp])) if np.any(supp) else 0.0
    premise_neg = float(np.max(pos_wt[supp])) if np.any(supp) else 0.0
    scale = abs(J1) + abs(RHS) + tot["mag"] + 1e-300
    tol = 4 * grid.h * float(np.sum((t2f * (sigma**2 * neg_w + pos_wt))[supp])) + rel_floor * scale
    gap = J1 - RHS
    if abs(gap) <= tol:
        verdict = "EQUALITY"
    elif gap <= tol:
        verdict = "INEQUALITY-HOLDS"
    else:
        verdict = "VIOLATED"
    ref = (np.max(wv**2) + np.max(wtv**2)) * (1.0 + c.sup_norm)
    hold = max(premise_pos, premise_neg) <= premise_rtol * ref
    return CaccioppoliReport(float(J1), float(RHS), premise_pos, premise_neg, verdict, float(R),
                             float(tol), float(scale), bool(hold))


def manufactured_potential(kernel: Kernel, w: GridFunction, scheme: OperatorScheme | None = None) -> PotentialSpec:
    """c := L w / w (zero-tail operator), so that w solves L w = c w exactly on the grid."""
    if np.any(w.values <= 0):
        raise GridError("manufactured potential needs w > 0")
    lw = zero_tail_apply(kernel, w.values, w.grid, scheme)
    return PotentialSpec(w.grid, lw / w.values)


def bump_sum(x, centers, widths, heights):
    """Sum of compactly supported bumps height * (1 - ((x - c)/width)^2)^3."""
    out = np.zeros_like(np.asarray(x, dtype=float))
    for c, r, a in zip(centers, widths, heights):
        t = (x - c) / r
        out += a * np.where(np.abs(t) < 1, (1 - t * t) ** 3, 0.0)
    return out


@dataclass
class SamplingReport:
    draws: int
    accepted: int
    holds: int
    worst_margin: float
    verdicts: dict
    rejected: dict = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return self.accepted > 0 and self.holds == self.accepted

    def to_json(self) -> dict:
        return {"draws": self.draws, "accepted": self.accepted, "holds": self.holds,
                "worst_margin": self.worst_margin, "verdicts": self.verdicts,
                "rejected": self.rejected, "pass": self.all_hold}


def sample_caccioppoli(kernel: Kernel, w: GridFunction, R: float, accept: int = 200, seed: int = 0,
                       max_draws: int = 5000, scheme: OperatorScheme | None = None) -> SamplingReport:
    """Rejection-sampled check of J1 <= RHS + tol.

    With c = Lw/w, each draw sets wt = a w (1 + psi) for a random positive
    multiple a and a random sum of 1-3 positive bumps psi anywhere on the grid.
    Draws whose premises fail numerically are rejected; for the rest the
    inequality must hold. ``worst_margin`` is the largest (J1 - RHS) / tol.
    """
    rng = np.random.default_rng(seed)
    c = manufactured_potential(kernel, w, scheme)
    x = w.grid.x
    X = w.grid.X
    draws = accepted = holds = 0
    worst = -np.inf
    verdicts: dict = {}
    rejected: dict = {}
    while accepted < accept and draws < max_draws:
        draws += 1
        k = int(rng.integers(1, 4))
        psi = bump_sum(x, rng.uniform(-0.9 * X, 0.9 * X, k), rng.uniform(0.5, 3.0, k), rng.uniform(0.05, 1.0, k))
        a = float(rng.uniform(0.5, 3.0))
        wt = w.with_values(a * w.values * (1.0 + psi))
        rep = caccioppoli_check(w, wt, kernel, c, R, scheme=scheme)
        if not rep.premises_hold:
            rejected[rep.verdict] = rejected.get(rep.verdict, 0) + 1
            continue
        accepted += 1
        verdicts[rep.verdict] = verdicts.get(rep.verdict, 0) + 1
        if rep.verdict != "VIOLATED":
            holds += 1
        worst = max(worst, (rep.J1 - rep.RHS) / rep.tol)
    return SamplingReport(draws, accepted, holds, float(worst), verdicts, rejected)

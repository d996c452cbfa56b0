"""Linearized operators L - c, their bottom spectrum, and certificate reports.

Certificates are numerical evidence at a stated discretization: every report
records the grid (X, h, delta), the measured quantities and the declared
(unverified) regularity assumptions.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, eigsh

from .kernels import Kernel, KernelError, tail_mass
from .operator import GridError, GridFunction, OperatorScheme, TailModel, derivative, discrete_operator
from .potential import PotentialSpec, infer_negativity

log = logging.getLogger(__name__)

PASS, FAIL, HNM = "PASS", "FAIL", "HYPOTHESES-NOT-MET"


class CertificateError(RuntimeError):
    pass


@dataclass(frozen=True)
class CertificateConfig:
    """All certificate tolerances in one record."""

    k: int = 6
    tol0: float = 5e-3
    cosine_min: float = 0.999
    gap_factor: float = 10.0
    gap_floor: float = 1e-6
    dense_max: int = 4096
    eig_tol: float = 1e-8
    bound_eps: float = 1e-2
    inner_fraction: float = 0.9
    premise_rtol: float = 1e-3
    osc_factor: float = 10.0
    osc_floor: float = 1e-10
    mp_rtol: float = 1e-6

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CertificateReport:
    theorem: str
    verdict: str
    eigs: list = field(default_factory=list)
    cosine: float | None = None
    gap: float | None = None
    C_bound: float | None = None
    oscillation: float | None = None
    assumptions: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in (PASS, FAIL, HNM):
            raise ValueError(f"invalid verdict {self.verdict!r}")
        for v in [*self.eigs, self.cosine, self.gap, self.C_bound, self.oscillation]:
            if v is not None and not math.isfinite(v):
                raise ValueError("certificate fields must be finite")

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_json(self) -> dict:
        return {"theorem": self.theorem, "verdict": self.verdict, "eigs": [float(e) for e in self.eigs],
                "cosine": self.cosine, "gap": self.gap, "C_bound": self.C_bound,
                "oscillation": self.oscillation, "assumptions": self.assumptions, "grid": self.grid,
                "diagnostics": _plain(self.diagnostics)}


def _plain(d):
    if isinstance(d, dict):
        return {k: _plain(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_plain(v) for v in d]
    if isinstance(d, (np.floating, np.integer)):
        return d.item()
    if isinstance(d, np.bool_):
        return bool(d)
    return d


def _grid_record(grid, scheme: OperatorScheme) -> dict:
    return {"X": grid.X, "h": grid.h, "delta": scheme.resolve_delta(grid.h)}


# ---------------------------------------------------------------------------
# assembly


@dataclass
class LinearizedOperator:
    """Zero-tail discretization of L - c on all nodes, or on x > 0 for odd functions."""

    kernel: Kernel
    c: PotentialSpec
    scheme: OperatorScheme
    odd: bool
    _dense: np.ndarray | None = None

    @property
    def grid(self):
        return self.c.grid

    @property
    def op(self):
        return discrete_operator(self.kernel, self.grid, self.scheme)

    @property
    def nodes(self) -> np.ndarray:
        x = self.grid.x
        return x[self.grid.center + 1 :] if self.odd else x

    @property
    def potential(self) -> np.ndarray:
        v = self.c.values
        return v[self.grid.center + 1 :] if self.odd else v

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def matrix(self) -> np.ndarray:
        if self._dense is None:
            A = self.op.half_matrix("odd") if self.odd else self.op.matrix()
            A[np.diag_indices_from(A)] -= self.potential
            self._dense = A
        return self._dense

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        if self.odd or self._dense is not None:
            return self.matrix @ v
        return self.op.apply(v, TailModel()) - self.potential * v

    def linear_operator(self) -> LinearOperator:
        n = self.size
        return LinearOperator((n, n), matvec=self.matvec, dtype=float)

    def asymmetry(self) -> float:
        A = self.matrix
        return float(np.max(np.abs(A - A.T)))


def assemble_linearized(kernel: Kernel, c: PotentialSpec, grid=None, scheme: OperatorScheme | None = None,
                        odd: bool = False, check_symmetry: bool = True) -> LinearizedOperator:
    """Discrete L - c with zero tail (eigenmodes are assumed to decay)."""
    scheme = scheme or OperatorScheme()
    if grid is not None and grid != c.grid:
        raise GridError("grid mismatch")
    if odd:
        if not kernel.monotone:
            raise KernelError("odd assembly needs a monotone kernel")
        v = c.values
        if np.max(np.abs(v - v[::-1])) > 1e-12 * max(1.0, np.max(np.abs(v))):
            raise GridError("odd assembly needs an even potential")
    lin = LinearizedOperator(kernel, c, scheme, odd)
    if check_symmetry and lin.size <= 4096:
        asym = lin.asymmetry()
        if asym > 1e-12:
            raise CertificateError(f"assembled matrix is not symmetric ({asym:.2e})")
    return lin


def bottom_spectrum(lin: LinearizedOperator, k: int = 6, dense_max: int = 4096, tol: float = 1e-8):
    """The k smallest eigenpairs (ascending): dense eigh up to ``dense_max`` unknowns, Lanczos above."""
    n = lin.size
    k = min(k, n)
    if n <= dense_max:
        vals, vecs = linalg.eigh(lin.matrix, subset_by_index=[0, k - 1])
    else:
        try:
            vals, vecs = eigsh(lin.linear_operator(), k=k, which="SA", tol=tol, ncv=max(4 * k, 40),
                               maxiter=20 * n, v0=np.ones(n))
        except Exception as exc:  # ARPACK breakdown
            raise CertificateError(f"eigensolver breakdown: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    return vals, vecs


def _cosine(a, b) -> float:
    return float(abs(np.dot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))


# ---------------------------------------------------------------------------
# nondegeneracy


def nondegeneracy_certificate(u, kernel: Kernel, f, odd: bool = False, *, config: CertificateConfig | None = None,
                              scheme: OperatorScheme | None = None, converged: bool | None = None,
                              reference: np.ndarray | None = None, assumptions: dict | None = None
                              ) -> CertificateReport:
    """Near-kernel of L - f'(u): one small eigenvalue, eigenvector along u', then a gap.

    ``u`` is a solver result or a GridFunction; for ``odd`` it is a ground state
    and the odd-restricted operator on x > 0 is used. ``reference`` replaces the
    numerical derivative of u as the alignment target (values on all nodes).
    """
    cfg = config or CertificateConfig()
    scheme = scheme or OperatorScheme()
    if hasattr(u, "report"):
        converged = u.report.converged if converged is None else converged
        u = u.u
    if converged is False:
        raise CertificateError("nondegeneracy certificate needs a converged solution")
    grid = u.grid
    c = PotentialSpec(grid, f.fp(u.values), even=odd)
    lin = assemble_linearized(kernel, c, grid, scheme, odd=odd, check_symmetry=lin_small(grid, odd, cfg))
    vals, vecs = bottom_spectrum(lin, cfg.k, cfg.dense_max, cfg.eig_tol)
    du = derivative(u).values if reference is None else np.asarray(reference, dtype=float)
    if odd:
        du = du[grid.center + 1 :]
    cos = _cosine(vecs[:, 0], du)
    l1, l2 = float(vals[0]), float(vals[1])
    ok = abs(l1) <= cfg.tol0 and cos >= cfg.cosine_min and l2 >= cfg.gap_factor * abs(l1) + cfg.gap_floor
    rq = float(du @ lin.matvec(du) / (du @ du))
    rep = CertificateReport(
        "odd-nondegeneracy" if odd else "layer-nondegeneracy", PASS if ok else FAIL,
        [float(v) for v in vals], cos, l2 - l1, None, None,
        {"f_hoelder": getattr(f, "hoelder", None), **(assumptions or {})},
        _grid_record(grid, scheme),
        {"lambda1": l1, "lambda2": l2, "rayleigh_derivative": rq, "truncation_radius": grid.X,
         "tol0": cfg.tol0, "cosine_min": cfg.cosine_min, "gap_factor": cfg.gap_factor,
         "gap_floor": cfg.gap_floor, "unknowns": lin.size},
    )
    rep.eigenvector = vecs[:, 0]  # type: ignore[attr-defined]
    return rep


def lin_small(grid, odd, cfg) -> bool:
    return (grid.n if odd else grid.N) <= cfg.dense_max


def eigenvector_function(lin_or_grid, vec: np.ndarray, odd: bool = False, sign_like: np.ndarray | None = None
                         ) -> GridFunction:
    """Grid function (zero tail) from an eigenvector, sign fixed to be positive in the mean."""
    grid = lin_or_grid.grid if hasattr(lin_or_grid, "grid") else lin_or_grid
    v = np.asarray(vec, dtype=float)
    if odd:
        full = np.concatenate([-v[::-1], [0.0], v])
        sym = "odd"
    else:
        full = v
        sym = "none"
    ref = full if sign_like is None else sign_like
    if np.dot(full, ref) < 0 or (sign_like is None and np.sum(full) < 0):
        full = -full
    return GridFunction(grid, full, TailModel(), sym)


# ---------------------------------------------------------------------------
# quotient


def _premise(kernel, c, phi: GridFunction, scheme, mask) -> float:
    op = discrete_operator(kernel, phi.grid, scheme)
    r = op.apply(phi.values, TailModel()) - c.values * phi.values
    return float(np.max(np.abs(r[mask])))


def _sigma_origin(x, sigma_pos):
    """Quadratic extrapolation of sigma to x = 0 from the three nearest positive nodes."""
    coef = np.polyfit(x[:3], sigma_pos[:3], 2)
    return float(np.polyval(coef, 0.0))


def _growth_fit(grid, values) -> float:
    X = grid.X
    Rs = np.geomspace(max(1.0, 4 * grid.h), 0.9 * X, 8)
    m = np.array([np.max(np.abs(values[np.abs(grid.x) <= R])) for R in Rs])
    if np.any(m <= 0):
        return float("nan")
    return float(np.polyfit(np.log(Rs), np.log(m), 1)[0])


def quotient_certificate(w: GridFunction, wt: GridFunction, kernel: Kernel, c: PotentialSpec, odd: bool = False,
                         *, R0: float | None = None, r0: float | None = None,
                         config: CertificateConfig | None = None, scheme: OperatorScheme | None = None,
                         assumptions: dict | None = None) -> CertificateReport:
    """Boundedness and constancy of sigma = wt / w for two solutions of L phi = c phi.

    Both premise residuals |L phi - c phi| are measured on the inner nodes with
    the zero exterior convention of the eigenproblems (so that the two
    functions are compared as solutions of the same discrete problem), relative
    to |phi|_inf (1 + |c|_inf). A positive w whose residual is too large means
    the hypotheses are not met; a large residual of wt is reported as a failed
    premise (``wt_is_solution``) and fails the certificate.

    A residual perturbation of relative size rho changes sigma at node x by
    about rho |sigma|_inf |w|_inf / |w(x)|, hence constancy passes iff

        osc(sigma) <= osc_factor * (rho_w + rho_wt) * |sigma|_inf * |w|_inf / min_inner |w| + floor.
    """
    cfg = config or CertificateConfig()
    scheme = scheme or OperatorScheme()
    grid = w.grid
    if wt.grid != grid or c.grid != grid:
        raise GridError("grid mismatch")
    x = grid.x
    inner = np.abs(x) <= cfg.inner_fraction * grid.X
    region = (x > 0) if odd else np.ones(grid.N, dtype=bool)
    diag = {}
    tag = "odd-quotient-constancy" if odd else "quotient-constancy"
    rec = _grid_record(grid, scheme)
    declared = {"alpha": None, "beta0": c.beta0, **(assumptions or {})}

    def hnm(reason):
        diag["reason"] = reason
        return CertificateReport(tag, HNM, assumptions=declared, grid=rec, diagnostics=diag)

    wv, wtv = w.values, wt.values
    if np.any(wv[region] <= 0):
        return hnm("w is not positive" + (" on x > 0" if odd else ""))
    if odd and (np.max(np.abs(wv + wv[::-1])) > 1e-10 * np.max(np.abs(wv))):
        return hnm("odd certificate needs odd w")
    rw = _premise(kernel, c, w, scheme, inner) / (np.max(np.abs(wv)) * (1 + c.sup_norm))
    rwt = _premise(kernel, c, wt, scheme, inner) / (np.max(np.abs(wtv)) * (1 + c.sup_norm))
    diag.update({"premise_w": rw, "premise_wt": rwt, "premise_rtol": cfg.premise_rtol})
    if rw > cfg.premise_rtol:
        return hnm("residual of w exceeds the premise tolerance")
    wt_ok = rwt <= cfg.premise_rtol
    diag["wt_is_solution"] = bool(wt_ok)

    sigma = np.full(grid.N, np.nan)
    sigma[region] = wtv[region] / wv[region]
    if odd:
        cen = grid.center
        sigma[cen] = _sigma_origin(x[cen + 1 : cen + 4], sigma[cen + 1 : cen + 4])
        sigma[:cen] = sigma[: cen : -1]
    # boundedness: C from the inner window [-R0, R0] ([r0, R0] when odd)
    if R0 is None:
        R0 = c.R0 if c.R0 is not None else infer_negativity(grid, c.values, c.c0 or 1e-12)
    if R0 is None:
        return hnm("no negativity radius R0 for the potential")
    win = np.abs(x) <= R0
    if odd:
        rr = r0 if r0 is not None else (c.r0 or 0.0)
        win &= np.abs(x) >= rr
    C = float(np.max(np.abs(sigma[win])))
    glob = float(np.nanmax(np.abs(sigma)))
    bounded = glob <= C * (1 + cfg.bound_eps) + cfg.osc_floor
    s_in = sigma[inner]
    osc = float(np.max(s_in) - np.min(s_in))
    sig_scale = float(np.max(np.abs(s_in)))
    cond = float(np.max(np.abs(wv)) / np.min(np.abs(wv[inner & region])))
    tol_sigma = cfg.osc_factor * (rw + rwt) * sig_scale * cond + cfg.osc_floor * max(1.0, sig_scale)
    diag["conditioning"] = cond
    constant = osc <= tol_sigma
    ok = bounded and constant and wt_ok
    diag.update({"tol_sigma": tol_sigma, "bounded": bool(bounded), "sup_sigma": glob, "R0": float(R0),
                 "sigma_mean": float(np.mean(s_in)), "wt_growth_exponent": _growth_fit(grid, wtv),
                 "constant": bool(constant)})
    return CertificateReport(tag, PASS if ok else FAIL, [], None, None, C, osc, declared, rec, diag)


# ---------------------------------------------------------------------------
# maximum principles


def admissible_radius(lam: float, s: float, c_sup: float) -> float:
    """Largest r0 with |c|_inf < lam / (s r0^(2s)) (exclusive)."""
    if c_sup <= 0:
        return math.inf
    return (lam / (s * c_sup)) ** (1.0 / (2.0 * s))


def small_domain_gate(lam: float, s: float, c_sup: float, r0: float) -> bool:
    """Small-domain condition |c|_inf < lam / (s r0^(2s))."""
    if not r0 > 0:
        return False
    return c_sup < lam / (s * r0 ** (2.0 * s))


def max_principle_check(kernel: Kernel, c: PotentialSpec, phi: GridFunction, odd: bool = False, *,
                        r0: float | None = None, config: CertificateConfig | None = None,
                        scheme: OperatorScheme | None = None) -> CertificateReport:
    """Check the hypotheses of the (odd) maximum principle for phi and then phi >= 0.

    Residual signs are judged with tolerance mp_rtol * |phi|_inf (1 + |c|_inf)
    on the trusted window |x| <= inner_fraction * X (the outermost nodes depend
    on the far-field model of phi rather than on phi itself).
    """
    cfg = config or CertificateConfig()
    scheme = scheme or OperatorScheme()
    grid = phi.grid
    if c.grid != grid:
        raise GridError("grid mismatch")
    x = grid.x
    tag = "odd-maximum-principle" if odd else "maximum-principle"
    rec = _grid_record(grid, scheme)
    declared = c.assumptions()
    diag: dict = {}

    def hnm(reason):
        diag["reason"] = reason
        return CertificateReport(tag, HNM, assumptions=declared, grid=rec, diagnostics=diag)

    if not c.has_negativity_record:
        return hnm("potential has no negativity record (c0, R0)")
    if not c.negativity_holds():
        return hnm("potential is not <= -c0 outside [-R0, R0]")
    R0 = float(c.R0)
    op = discrete_operator(kernel, grid, scheme)
    pv = phi.values
    eps = cfg.mp_rtol * max(np.max(np.abs(pv)), 1e-300) * (1 + c.sup_norm)
    res = op.apply(pv, phi.tail) - c.values * pv
    trusted = np.abs(x) <= cfg.inner_fraction * grid.X
    diag["eps"] = float(eps)
    diag["trusted_radius"] = cfg.inner_fraction * grid.X
    if odd:
        if phi.symmetry != "odd":
            return hnm("odd check needs an odd-tagged function")
        if not kernel.monotone:
            return hnm("odd check needs a monotone kernel")
        if not c.even:
            return hnm("odd check needs an even potential")
        rr = r0 if r0 is not None else c.r0
        if rr is None or kernel.k2 is None:
            return hnm("odd check needs r0 and a lower kernel bound")
        lam, s = kernel.k2.lam, kernel.k2.s
        gate = small_domain_gate(lam, s, c.sup_norm, rr)
        diag.update({"r0": float(rr), "admissible_radius": admissible_radius(lam, s, c.sup_norm),
                     "small_domain": bool(gate)})
        if not gate:
            return hnm("small-domain condition fails for r0")
        outer = ((x > 0) & (x < rr)) | (x > R0)
        inside = (x >= rr) & (x <= R0)
        ctilde = c.values - 2.0 * tail_mass(kernel, np.where(x > 0, x, 1.0))
        ct0 = -float(np.max(ctilde[outer])) if np.any(outer) else math.inf
        diag["ctilde0"] = ct0
        diag["ctilde_negative"] = bool(ct0 > 0)
        domain = x >= 0
    else:
        outer = np.abs(x) > R0
        inside = ~outer
        domain = np.ones(grid.N, dtype=bool)
    outer = outer & trusted
    h1 = bool(np.all(res[outer] >= -eps))
    h2 = bool(np.all(pv[inside] >= -eps))
    diag.update({"min_residual_outside": float(np.min(res[outer])) if np.any(outer) else None,
                 "min_phi_inside": float(np.min(pv[inside])) if np.any(inside) else None,
                 "residual_hypothesis": h1, "sign_hypothesis": h2})
    if not (h1 and h2):
        return hnm("hypotheses of the maximum principle fail on the grid")
    mn = float(np.min(pv[domain]))
    diag["min_phi"] = mn
    verdict = PASS if mn >= -eps else FAIL
    return CertificateReport(tag, verdict, assumptions=declared, grid=rec, diagnostics=diag)


def refinement_study(kernel: Kernel, f, X: float, hs, odd: bool = False, config=None, solver_config=None):
    """lambda_1 of the (layer or ground-state) certificate along a sequence of spacings."""
    from .operator import Grid1D
    from .solvers import solve_ground_state, solve_layer

    out = []
    for h in hs:
        g = Grid1D(X, h)
        sol = (solve_ground_state if odd else solve_layer)(kernel, f, g, solver_config)
        rep = nondegeneracy_certificate(sol, kernel, f, odd, config=config)
        out.append((h, rep.eigs[0], rep))
    lam = [abs(v[1]) for v in out]
    monotone = all(b < a for a, b in zip(lam, lam[1:]))
    return out, monotone

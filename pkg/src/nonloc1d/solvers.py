"""Layer solutions and ground states of L u = f(u) by damped Newton iteration.

The discrete equation is ``A u - b(tail) - f(u) = 0`` on the interior nodes,
where ``A`` is the zero-tail operator matrix and ``b`` the load of the current
far-field tail model. The tail amplitude is refitted between Newton passes.
For odd nonlinearities the layer is computed on x > 0 with odd reflection
(which also fixes u(0) = 0); ground states are always computed on x >= 0 with
even reflection.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, gmres

from .kernels import Kernel, make_fractional_kernel
from .operator import Grid1D, GridFunction, OperatorScheme, TailModel, discrete_operator, fit_tail

log = logging.getLogger(__name__)


class NonlinearityError(ValueError):
    pass


@dataclass(frozen=True)
class NonlinearitySpec:
    name: str
    f: Callable
    fp: Callable
    kind: str = "layer"  # layer | ground
    hoelder: float = 1.0
    expression: str | None = None

    def check(self, tol: float = 1e-10) -> None:
        """Numerical check of the sign conditions at the equilibria."""
        if self.kind == "layer":
            pts = np.array([-1.0, 1.0])
            if np.max(np.abs(self.f(pts))) > tol:
                raise NonlinearityError("layer nonlinearity needs f(+-1) = 0")
            if np.any(self.fp(pts) >= 0):
                raise NonlinearityError("layer nonlinearity needs f'(+-1) < 0")
        elif self.kind == "ground":
            if abs(float(self.f(np.array([0.0]))[0])) > tol:
                raise NonlinearityError("ground-state nonlinearity needs f(0) = 0")
            if float(self.fp(np.array([0.0]))[0]) >= 0:
                raise NonlinearityError("ground-state nonlinearity needs f'(0) < 0")
        else:
            raise NonlinearityError(f"unknown nonlinearity kind {self.kind!r}")

    def is_odd(self) -> bool:
        u = np.linspace(-1, 1, 41)
        return bool(np.max(np.abs(self.f(u) + self.f(-u))) <= 1e-13 * max(1.0, np.max(np.abs(self.f(u)))))

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind, "expression": self.expression, "hoelder": self.hoelder}


def _vec(fun):
    return lambda u: np.asarray(fun(np.asarray(u, dtype=float)), dtype=float) + 0.0 * np.asarray(u, dtype=float)


BUILTIN = {
    "sin": ("sin(pi*u)/pi", "layer"),
    "allen-cahn": ("u - u**3", "layer"),
    "bo": ("u**2 - u", "ground"),
}


def make_nonlinearity(spec: str, kind: str | None = None, hoelder: float = 1.0) -> NonlinearitySpec:
    """Builtin name ("sin", "allen-cahn", "bo") or a sympy expression in ``u``."""
    name = spec
    if spec in BUILTIN:
        expr_s, k0 = BUILTIN[spec]
        kind = kind or k0
    else:
        expr_s = spec
        kind = kind or "layer"
    u = sympy.Symbol("u")
    try:
        expr = sympy.sympify(expr_s, locals={"u": u})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise NonlinearityError(f"cannot parse nonlinearity {spec!r}") from exc
    if expr.free_symbols - {u}:
        raise NonlinearityError("nonlinearity may only depend on u")
    f = _vec(sympy.lambdify(u, expr, "numpy"))
    fp = _vec(sympy.lambdify(u, sympy.diff(expr, u), "numpy"))
    nl = NonlinearitySpec(name, f, fp, kind, hoelder, str(expr))
    nl.check()
    return nl


@dataclass
class SolverConfig:
    max_iter: int = 60
    tol: float = 1e-8
    min_step: float = 1.0 / 1024
    armijo: float = 1e-4
    tail_passes: int = 12
    tail_rtol: float = 1e-7
    continuation: Sequence[float] = ()
    guess: str = "auto"  # auto | tanh | bump | zero
    guess_amplitude: float = 2.0
    pin: float = 0.0
    exploit_symmetry: bool = True
    scheme: OperatorScheme = field(default_factory=OperatorScheme)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("residual target must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def to_json(self) -> dict:
        return {"max_iter": self.max_iter, "tol": self.tol, "tail_passes": self.tail_passes, "tail_rtol": self.tail_rtol,
                "continuation": list(self.continuation), "guess": self.guess,
                "guess_amplitude": self.guess_amplitude, "pin": self.pin}


@dataclass
class ConvergenceReport:
    iterations: int
    residual: float
    flags: list
    tail: dict
    converged: bool
    history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = {"iterations": self.iterations, "residual": self.residual, "flags": list(self.flags),
             "tail": self.tail, "converged": self.converged}
        d.update(self.extra)
        return d


@dataclass
class SolveResult:
    u: GridFunction
    report: ConvergenceReport
    kernel: Kernel
    nonlinearity: NonlinearitySpec


# ---------------------------------------------------------------------------
# Newton core


class _System:
    """Interior system G(v) = A v - b - f(v) in a reduced coordinate (full / odd / even half)."""

    def __init__(self, op, mode: str, f: NonlinearitySpec, pin_index: int | None):
        self.op, self.mode, self.f, self.pin = op, mode, f, pin_index
        n = op.grid.n
        if mode == "full":
            self.sl = slice(0, op.grid.N)
            self.dense = None if op.grid.N > 4500 else op.matrix()
        elif mode == "odd":
            self.sl = slice(n + 1, None)
            self.dense = op.half_matrix("odd")
        else:
            self.sl = slice(n, None)
            self.dense = op.half_matrix("even")
        self.b = None
        self.lu = None

    def set_tail(self, tail: TailModel):
        self.b = self.op.boundary_term(tail)[self.sl]

    def Av(self, v):
        if self.dense is not None:
            return self.dense @ v
        return self.op.apply(v, TailModel())

    def G(self, v):
        g = self.Av(v) - self.b - self.f.f(v)
        if self.pin is not None:
            g[self.pin] = v[self.pin]
        return g

    def jac_dense(self, v):
        A = self.dense if self.dense is not None else self.op.matrix()
        J = A - np.diag(self.f.fp(v))
        if self.pin is not None:
            J[self.pin, :] = 0.0
            J[self.pin, self.pin] = 1.0
        return J

    def solve(self, v, rhs):
        """Newton step; the last LU factor preconditions GMRES and is refreshed when that stalls."""
        fp = self.f.fp(v)

        def mv(x):
            y = self.Av(x) - fp * x
            if self.pin is not None:
                y[self.pin] = x[self.pin]
            return y

        N = len(v)
        if self.lu is not None:
            lu = self.lu
            M = LinearOperator((N, N), matvec=lambda r: linalg.lu_solve(lu, r, check_finite=False))
            x, info = gmres(LinearOperator((N, N), matvec=mv), rhs, M=M, rtol=1e-12, atol=0.0,
                            restart=20, maxiter=1)
            if info == 0:
                return x
        self.lu = linalg.lu_factor(self.jac_dense(v), check_finite=False)
        return linalg.lu_solve(self.lu, rhs, check_finite=False)


def _newton(system: _System, v0: np.ndarray, cfg: SolverConfig, history: list):
    v = v0.copy()
    g = system.G(v)
    norm = np.linalg.norm(g)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if np.max(np.abs(g)) <= 0.01 * cfg.tol:
            return v, it - 1, True
        dv = system.solve(v, -g)
        t = 1.0
        while True:
            vt = v + t * dv
            gt = system.G(vt)
            nt = np.linalg.norm(gt)
            if nt <= (1 - cfg.armijo * t) * norm or t <= cfg.min_step:
                break
            t *= 0.5
        v, g, norm = vt, gt, nt
        history.append({"step": float(t), "residual": float(np.max(np.abs(g)))})
        if np.max(np.abs(t * dv)) < 1e-14 * max(1.0, np.max(np.abs(v))):
            break
    return v, it, bool(np.max(np.abs(g)) <= cfg.tol)


def _expand(grid: Grid1D, mode: str, v: np.ndarray) -> np.ndarray:
    n = grid.n
    if mode == "full":
        return v.copy()
    if mode == "odd":
        return np.concatenate([-v[::-1], [0.0], v])
    return np.concatenate([v[:0:-1], v])


def _restrict(grid: Grid1D, mode: str, u: np.ndarray) -> np.ndarray:
    n = grid.n
    if mode == "full":
        return u.copy()
    if mode == "odd":
        return u[n + 1 :].copy()
    return u[n:].copy()


def _fit(grid, mode, v, limits, p):
    t = fit_tail(grid, _expand(grid, mode, v), limits[0], limits[1], p)
    if mode == "odd":
        return np.array([-t.amp_right, t.amp_right])
    if mode == "even":
        return np.array([t.amp_right, t.amp_right])
    return np.array([t.amp_left, t.amp_right])


def _solve(kernel: Kernel, f: NonlinearitySpec, grid: Grid1D, cfg: SolverConfig, mode: str,
           u0: np.ndarray, limits: tuple[float, float], p: float, pin: int | None):
    """Newton passes with the tail amplitude updated by a per-side secant step on a -> fit(u(a))."""
    op = discrete_operator(kernel, grid, cfg.scheme)
    system = _System(op, mode, f, pin)
    v = _restrict(grid, mode, u0)
    history: list = []
    total_it = 0
    ok = False
    a_in = _fit(grid, mode, v, limits, p)
    prev = None
    change = float("inf")
    for _ in range(max(1, cfg.tail_passes)):
        tail = TailModel.algebraic(limits[0], limits[1], a_in[0], a_in[1], p)
        system.set_tail(tail)
        v, it, ok = _newton(system, v, cfg, history)
        total_it += it
        a_out = _fit(grid, mode, v, limits, p)
        F = a_out - a_in
        change = float(np.max(np.abs(F)))
        if change <= cfg.tail_rtol * max(1.0, float(np.max(np.abs(a_out)))):
            break
        nxt = a_out.copy()
        if prev is not None:
            dF = F - prev[1]
            da = a_in - prev[0]
            good = np.abs(dF) > 1e-14
            nxt[good] = a_in[good] - F[good] * da[good] / dF[good]
        prev = (a_in, F)
        a_in = nxt
    u = _expand(grid, mode, v)
    return u, tail, total_it, ok, history, change


def _residual_inner(kernel, f, u: GridFunction, scheme, margin: float = 5.0, exclude=None):
    op = discrete_operator(kernel, u.grid, scheme)
    r = op.apply(u.values, u.tail) - f.f(u.values)
    x = u.grid.x
    mask = np.abs(x) <= max(u.grid.X - margin, 0.5 * u.grid.X)
    if exclude is not None:
        mask[exclude] = False
    return float(np.max(np.abs(r[mask]))), r


def _check_kernel(kernel: Kernel):
    if not (0.5 <= kernel.s_lo <= kernel.s_hi < 1):
        raise ValueError("kernel order window must lie in [1/2, 1)")


def solve_layer(kernel: Kernel, f: NonlinearitySpec, grid: Grid1D, config: SolverConfig | None = None,
                initial: np.ndarray | None = None) -> SolveResult:
    """Increasing layer with limits -1, +1, normalized by u(pin) = 0."""
    cfg = config or SolverConfig()
    _check_kernel(kernel)
    if f.kind != "layer":
        raise NonlinearityError("solve_layer needs a layer nonlinearity")
    f.check()
    if cfg.continuation:
        return _continuation(kernel, f, grid, cfg)
    x = grid.x
    pin = int(round((cfg.pin + grid.X) / grid.h))
    if not 0 <= pin < grid.N:
        raise ValueError("pin outside the grid")
    xp = x[pin]
    if initial is not None:
        u0 = np.asarray(initial, dtype=float)
    elif cfg.guess in ("auto", "tanh"):
        u0 = np.tanh(x - xp)
    elif cfg.guess == "zero":
        u0 = np.zeros(grid.N)
    else:
        raise ValueError(f"unsupported layer guess {cfg.guess!r}")
    p = 2.0 * kernel.s_lo
    symmetric = cfg.exploit_symmetry and f.is_odd() and pin == grid.center
    mode = "odd" if symmetric else "full"
    if mode == "odd":
        u0 = 0.5 * (u0 - u0[::-1])
    u, tail, its, ok, history, tail_change = _solve(
        kernel, f, grid, cfg, mode, u0, (-1.0, 1.0), p, None if symmetric else pin)
    sym = "odd" if symmetric else "none"
    U = GridFunction(grid, u, tail, sym)
    res, _ = _residual_inner(kernel, f, U, cfg.scheme, exclude=None if symmetric else pin)
    flags = []
    if not ok or res > cfg.tol:
        flags.append("FAILED")
    if not np.all(np.diff(u) > 0):
        flags.append("DEGENERATE")
    if np.max(np.abs(u)) > 1 + 1e-8:
        flags.append("OUT-OF-RANGE")
    if not flags:
        flags.append("CONVERGED")
    rep = ConvergenceReport(its, res, flags, tail.to_json(), flags == ["CONVERGED"], history,
                            {"mode": mode, "pin": float(xp), "tail_change": tail_change,
                             "tail_exponent": p})
    log.info("layer: %s after %d iterations, residual %.3e", flags, its, res)
    return SolveResult(U, rep, kernel, f)


def _continuation(kernel: Kernel, f: NonlinearitySpec, grid: Grid1D, cfg: SolverConfig) -> SolveResult:
    if kernel.kind != "fractional":
        raise ValueError("continuation in s needs a fractional kernel")
    target = kernel.s_lo
    ladder = [float(s) for s in cfg.continuation]
    if not ladder or abs(ladder[-1] - target) > 1e-12:
        ladder.append(target)
    sub = SolverConfig(**{**cfg.__dict__, "continuation": ()})
    prev = None
    steps = []
    result = None
    for s in ladder:
        k = make_fractional_kernel(s, normalized=kernel.normalized)
        result = solve_layer(k, f, grid, sub, initial=None if prev is None else prev.values)
        if prev is not None:
            steps.append({"s": s, "sup_change": float(np.max(np.abs(result.u.values - prev.values)))})
        prev = result.u
    result.report.extra["continuation"] = steps
    return result


def solve_ground_state(kernel: Kernel, f: NonlinearitySpec, grid: Grid1D,
                       config: SolverConfig | None = None) -> SolveResult:
    """Even positive decaying solution, computed on x >= 0 with even reflection."""
    cfg = config or SolverConfig()
    _check_kernel(kernel)
    if f.kind != "ground":
        raise NonlinearityError("solve_ground_state needs a ground-state nonlinearity")
    f.check()
    x = grid.x
    if cfg.guess in ("auto", "bump"):
        u0 = cfg.guess_amplitude / (1.0 + x * x)
    elif cfg.guess == "zero":
        u0 = np.zeros(grid.N)
    else:
        raise ValueError(f"unsupported ground-state guess {cfg.guess!r}")
    p = 1.0 + 2.0 * kernel.s_lo
    u, tail, its, ok, history, tail_change = _solve(kernel, f, grid, cfg, "even", u0, (0.0, 0.0), p, None)
    U = GridFunction(grid, u, tail, "even")
    res, _ = _residual_inner(kernel, f, U, cfg.scheme)
    flags = []
    if np.max(np.abs(u)) < 1e-6:
        flags.append("TRIVIAL-LIMIT")
    else:
        half = u[grid.center :]
        if not ok or res > cfg.tol:
            flags.append("FAILED")
        if np.any(u <= 0):
            flags.append("NONPOSITIVE")
        if not np.all(np.diff(half) < 0):
            flags.append("NONMONOTONE")
    if not flags:
        flags.append("CONVERGED")
    rep = ConvergenceReport(its, res, flags, tail.to_json(), flags == ["CONVERGED"], history,
                            {"mode": "even", "tail_change": tail_change, "tail_exponent": p})
    log.info("ground state: %s after %d iterations, residual %.3e", flags, its, res)
    return SolveResult(U, rep, kernel, f)

"""Discretization of the nonlocal operator Lphi(x) = PV int (phi(x) - phi(y)) K(x - y) dy.

The scheme on a uniform grid x_i = -X + i h:

* an extended grid with a ghost band of ``g`` nodes on each side carries the
  far-field tail model, so that the interpolant is defined up to ``X_e = X + g h``;
* beyond ``X_e`` the tail model is integrated analytically;
* the near field ``|z| < delta`` uses the second difference times the exact
  moment ``int_0^delta z^2 K``;
* the mid field integrates the piecewise-linear interpolant of phi exactly
  against K, plus a curvature correction that accounts for the quadratic
  interpolation error cell by cell.

All of this collapses into one symmetric Toeplitz weight sequence ``W[m]``
(weight between nodes m apart), a diagonal ``d_i``, and a far-field load.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import linalg, signal

from .kernels import Kernel, KernelError, tail_mass

_GAUSS_T, _GAUSS_W = np.polynomial.legendre.leggauss(10)
_GAUSS_T = 0.5 * (_GAUSS_T + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W
_EXACT_CELLS = 16


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    X: float
    h: float

    def __post_init__(self):
        if not (self.h > 0):
            raise GridError("h must be positive")
        if self.X < 1:
            raise GridError("X must be >= 1")
        r = 2.0 * self.X / self.h
        if abs(r - round(r)) > 1e-8 * max(1.0, r):
            raise GridError("2X/h must be an integer so that 0 is a node")

    @property
    def n(self) -> int:
        """Number of nodes on each side of the origin."""
        return int(round(self.X / self.h))

    @property
    def N(self) -> int:
        return 2 * self.n + 1

    @property
    def x(self) -> np.ndarray:
        return self.h * np.arange(-self.n, self.n + 1, dtype=float)

    @property
    def center(self) -> int:
        return self.n

    @property
    def ghost(self) -> int:
        return max(4, int(math.ceil(1.0 / self.h)))

    def to_json(self) -> dict:
        return {"X": self.X, "h": self.h}


@dataclass(frozen=True)
class TailModel:
    """Far-field model phi(x) = l_+ + a_+ x^(-p) (x > X), l_- + a_-|x|^(-p) (x < -X).

    ``kind`` is one of "zero", "constant", "algebraic". Amplitudes are signed
    per side so that both odd (layer) and even (bump) tails are representable.
    """

    kind: str = "zero"
    left: float = 0.0
    right: float = 0.0
    amp_left: float = 0.0
    amp_right: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "algebraic"):
            raise GridError(f"unknown tail kind {self.kind!r}")
        if self.kind == "zero" and (self.left or self.right or self.amp_left or self.amp_right):
            raise GridError("zero tail must have vanishing limits and amplitude")
        if self.kind == "constant" and (self.amp_left or self.amp_right):
            raise GridError("constant tail has no correction amplitude")
        if self.kind == "algebraic" and not (self.p > 0):
            raise GridError("algebraic tail needs p > 0")

    @classmethod
    def zero(cls) -> "TailModel":
        return cls()

    @classmethod
    def constant(cls, left: float, right: float) -> "TailModel":
        if left == 0 and right == 0:
            return cls()
        return cls("constant", float(left), float(right))

    @classmethod
    def algebraic(cls, left: float, right: float, amp_left: float, amp_right: float, p: float) -> "TailModel":
        return cls("algebraic", float(left), float(right), float(amp_left), float(amp_right), float(p))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        ay = np.abs(y)
        with np.errstate(divide="ignore"):
            corr = ay ** (-self.p) if self.kind == "algebraic" else np.zeros_like(ay)
        return np.where(y > 0, self.right + self.amp_right * corr, self.left + self.amp_left * corr)

    def scaled(self, a: float) -> "TailModel":
        if self.kind == "zero" or a == 0:
            return TailModel()
        return replace(self, left=a * self.left, right=a * self.right,
                       amp_left=a * self.amp_left, amp_right=a * self.amp_right)

    def derivative(self) -> "TailModel":
        """Tail model of phi' (limits 0, exponent p + 1)."""
        if self.kind != "algebraic":
            return TailModel()
        return TailModel.algebraic(0.0, 0.0, self.p * self.amp_left, -self.p * self.amp_right, self.p + 1.0)

    def to_json(self) -> dict:
        return {"kind": self.kind, "left": self.left, "right": self.right,
                "amp_left": self.amp_left, "amp_right": self.amp_right, "p": self.p}

    @classmethod
    def from_json(cls, d: dict) -> "TailModel":
        return cls(d.get("kind", "zero"), float(d.get("left", 0)), float(d.get("right", 0)),
                   float(d.get("amp_left", 0)), float(d.get("amp_right", 0)), float(d.get("p", 1)))


SYMMETRIES = ("none", "odd", "even")


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid1D
    values: np.ndarray
    tail: TailModel = field(default_factory=TailModel)
    symmetry: str = "none"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.N,):
            raise GridError(f"expected {self.grid.N} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("grid function values must be finite")
        if self.symmetry not in SYMMETRIES:
            raise GridError(f"unknown symmetry tag {self.symmetry!r}")
        scale = max(1.0, float(np.max(np.abs(v))))
        if self.symmetry == "odd":
            if np.max(np.abs(v + v[::-1])) > 1e-10 * scale or abs(v[self.grid.center]) > 1e-10 * scale:
                raise GridError("odd tag requires antisymmetric values")
            if self.tail.left != -self.tail.right or self.tail.amp_left != -self.tail.amp_right:
                raise GridError("odd tag requires an antisymmetric tail")
        if self.symmetry == "even":
            if np.max(np.abs(v - v[::-1])) > 1e-10 * scale:
                raise GridError("even tag requires symmetric values")
            if self.tail.left != self.tail.right or self.tail.amp_left != self.tail.amp_right:
                raise GridError("even tag requires a symmetric tail")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def half(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes x >= 0 and the corresponding values."""
        c = self.grid.center
        return self.grid.x[c:], self.values[c:]

    def with_values(self, values, tail: TailModel | None = None, symmetry: str | None = None) -> "GridFunction":
        return GridFunction(self.grid, values, self.tail if tail is None else tail,
                            self.symmetry if symmetry is None else symmetry)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _same_grid(self, other)
        t1, t2 = self.tail, other.tail
        if t1.kind == "zero":
            tail = t2
        elif t2.kind == "zero":
            tail = t1
        elif t1.kind == "constant" or t2.kind == "constant" or t1.p == t2.p:
            p = t1.p if t1.kind == "algebraic" else t2.p
            kind = "algebraic" if "algebraic" in (t1.kind, t2.kind) else "constant"
            tail = TailModel(kind, t1.left + t2.left, t1.right + t2.right,
                             t1.amp_left + t2.amp_left, t1.amp_right + t2.amp_right, p)
        else:
            raise GridError("cannot add tails with different exponents")
        sym = self.symmetry if self.symmetry == other.symmetry else "none"
        return GridFunction(self.grid, self.values + other.values, tail, sym)

    def __mul__(self, a: float) -> "GridFunction":
        return GridFunction(self.grid, a * self.values, self.tail.scaled(a), self.symmetry)

    __rmul__ = __mul__

    # -- io --------------------------------------------------------------------
    def to_csv(self, path) -> None:
        path = Path(path)
        lines = ["x,value"] + [f"{a!r},{b!r}" for a, b in zip(self.x.tolist(), self.values.tolist())]
        path.write_text("\n".join(lines) + "\n")
        meta = {"grid": self.grid.to_json(), "tail": self.tail.to_json(), "symmetry": self.symmetry}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(path.with_suffix(".json").read_text())
        grid = Grid1D(meta["grid"]["X"], meta["grid"]["h"])
        return cls(grid, data[:, 1], TailModel.from_json(meta["tail"]), meta["symmetry"])


def _same_grid(a: GridFunction, b: GridFunction):
    if a.grid != b.grid:
        raise GridError("grid mismatch")


@dataclass(frozen=True)
class OperatorScheme:
    """Discretization parameters: near-field radius delta (default h)."""

    delta: float | None = None
    tail_rtol: float = 1e-8
    cell_rule: str = "hat-curvature"

    def resolve_delta(self, h: float) -> float:
        d = h if self.delta is None else float(self.delta)
        if not (0 < d <= 4 * h * (1 + 1e-12)):
            raise GridError("near-field radius must satisfy 0 < delta <= 4h")
        return d

    def to_json(self, h: float) -> dict:
        return {"delta": self.resolve_delta(h), "tail_rtol": self.tail_rtol, "cell_rule": self.cell_rule}


# ---------------------------------------------------------------------------
# stencil


def _cell_moments(kernel: Kernel, h: float, delta: float, M: int):
    """Per cell j = [jh, (j+1)h] (clipped below at delta) return

    left[j]  = int (1 - t) K,  right[j] = int t K   (t = z/h - j, hat halves)
    bubble[j] = 1/2 int (z - jh)((j+1)h - z) K.
    """
    j = np.arange(M, dtype=float)
    left = np.zeros(M)
    right = np.zeros(M)
    bub = np.zeros(M)
    a = j * h
    b = (j + 1) * h
    # exact antiderivatives on the first cells (where K is least smooth on the cell scale)
    ne = min(M, _EXACT_CELLS)
    lo = np.maximum(a[:ne], delta)
    hi = b[:ne]
    ok = lo < hi
    lo, hi, jj = lo[ok], hi[ok], j[:ne][ok]
    m0 = kernel.moment(lo, hi, 0)
    m1 = kernel.moment(lo, hi, 1)
    m2 = kernel.moment(lo, hi, 2)
    # t = z/h - j:  int t K = m1/h - j m0
    rt = m1 / h - jj * m0
    right[:ne][ok] = rt
    left[:ne][ok] = m0 - rt
    aa = jj * h
    bb = (jj + 1) * h
    bub[:ne][ok] = 0.5 * (-aa * bb * m0 + (aa + bb) * m1 - m2)
    # Gauss-Legendre on the remaining cells (K smooth on each, relative width <= 1/16)
    if M > ne:
        jr = j[ne:]
        lo = np.maximum(jr * h, delta)
        width = (jr + 1) * h - lo
        t0 = (lo / h - jr)
        tt = t0[:, None] + (1 - t0)[:, None] * _GAUSS_T[None, :]
        kv = kernel((jr[:, None] + tt) * h)
        wq = _GAUSS_W[None, :] * width[:, None]
        right[ne:] = np.sum(wq * tt * kv, axis=1)
        left[ne:] = np.sum(wq * (1 - tt) * kv, axis=1)
        bub[ne:] = 0.5 * h * h * np.sum(wq * tt * (1 - tt) * kv, axis=1)
    return left, right, bub


@functools.lru_cache(maxsize=32)
def stencil(kernel: Kernel, h: float, delta: float, M: int):
    """Toeplitz weights W[0..M-1] (W[0] = 0) and the outer-half-hat weights O[0..M-1].

    O[m] is the part of the hat weight at distance m lying beyond that node;
    it is removed at the last ghost node where the analytic far field takes over.
    """
    left, right, bub = _cell_moments(kernel, h, delta, M + 1)
    W = np.zeros(M)
    # hat at node m uses the right part of cell m-1 and the left part of cell m
    W[1:] = right[: M - 1] + left[1:M]
    W[0] = 0.0
    W[1] += kernel.near_moment(delta) / h**2
    O = left[:M].copy()
    # curvature correction
    U = np.zeros(M + 1)
    U[0] = bub[0]
    U[1:] = 0.5 * (bub[:M] + bub[1 : M + 1])
    G = np.zeros(M)
    G[1 : M - 1] = (U[0 : M - 2] - 2 * U[1 : M - 1] + U[2:M]) / h**2
    G[M - 1] = (U[M - 2] - 2 * U[M - 1] + U[M]) / h**2
    Wc = W - G
    Wc[0] = 0.0
    Wc.setflags(write=False)
    O.setflags(write=False)
    return Wc, O


# ---------------------------------------------------------------------------
# operator


class DiscreteOperator:
    """The assembled discretization of L for one (kernel, grid, scheme)."""

    def __init__(self, kernel: Kernel, grid: Grid1D, scheme: OperatorScheme | None = None):
        if not (0 < kernel.s_lo and kernel.s_hi < 1):
            raise KernelError("s out of (0,1)")
        self.kernel = kernel
        self.grid = grid
        self.scheme = scheme or OperatorScheme()
        h = grid.h
        self.delta = self.scheme.resolve_delta(h)
        self.g = grid.ghost
        self.ne = grid.n + self.g  # ghost-extended half count
        self.Xe = self.ne * h
        self.M = 2 * self.ne + 1
        self.W, self.O = stencil(kernel, float(h), float(self.delta), self.M)
        self._far_cache: dict = {}
        x = grid.x
        # row sums over the extended grid, minus the outer halves at the two end nodes
        cs = np.cumsum(self.W)
        idx = np.arange(grid.N) + self.g  # positions on the extended grid
        right_count = self.M - 1 - idx
        self.mass_ext = cs[right_count] + cs[idx]
        self.o_right = self.O[right_count]
        self.o_left = self.O[idx]
        self.tm_right = tail_mass(kernel, self.Xe - x)
        self.tm_left = tail_mass(kernel, self.Xe + x)
        self.d = self.mass_ext - self.o_right - self.o_left + self.tm_right + self.tm_left

    # -- far field -----------------------------------------------------------
    def far_power(self, p: float):
        """J(+x_i) and J(-x_i) for J(x) = int_{X_e}^inf y^(-p) K(y - x) dy."""
        key = float(p)
        if key not in self._far_cache:
            x = self.grid.x
            jr = self.kernel.far_power_integral(self.Xe, x, key)
            jl = self.kernel.far_power_integral(self.Xe, -x, key)
            self._far_cache[key] = (jr, jl)
        return self._far_cache[key]

    def extended(self, values: np.ndarray, tail: TailModel) -> np.ndarray:
        g = self.g
        ye = self.grid.h * np.arange(-self.ne, self.ne + 1, dtype=float)
        ext = np.empty(self.M)
        ext[g:-g] = values
        ext[:g] = tail(ye[:g])
        ext[-g:] = tail(ye[-g:])
        return ext

    def load(self, tail: TailModel) -> np.ndarray:
        """Far-field load F_i (contribution of the region beyond X_e plus end-node fixes)."""
        if tail.kind == "zero":
            return np.zeros(self.grid.N)
        F = tail.right * self.tm_right + tail.left * self.tm_left
        if tail.kind == "algebraic":
            jr, jl = self.far_power(tail.p)
            F = F + tail.amp_right * jr + tail.amp_left * jl
        end = tail(np.array([-self.Xe, self.Xe]))
        F = F - self.o_right * end[1] - self.o_left * end[0]
        return F

    def apply(self, values: np.ndarray, tail: TailModel) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if tail.kind == "constant" and tail.left == tail.right:
            # L ignores a common far-field level; removing it avoids cancellation
            level = tail.left
            values = values - level
            tail = TailModel.zero()
        ext = self.extended(values, tail)
        kern = np.concatenate([self.W[::-1], self.W[1:]])
        conv = signal.fftconvolve(ext, kern, mode="same")[self.g : -self.g]
        return self.d * values - conv - self.load(tail)

    def boundary_term(self, tail: TailModel) -> np.ndarray:
        """b with L phi = A phi_interior - b for the zero-tail matrix A."""
        return -self.apply(np.zeros(self.grid.N), tail)

    # -- half-line (symmetric) forms --------------------------------------------
    def kappa(self) -> np.ndarray:
        """Discrete zeroth-order coefficient of the odd (regional) reduction on x_i >= 0."""
        n, ne = self.grid.n, self.ne
        i = np.arange(n + 1)
        cs = np.cumsum(self.W)
        # sum_{k=1..ne} W[i+k] with the end node replaced by its inner half
        hsum = cs[i + ne] - cs[i] - self.O[i + ne]
        return self.W[i] + 2.0 * hsum + 2.0 * self.tm_left[n:]

    def apply_odd(self, half_values: np.ndarray, tail: TailModel) -> np.ndarray:
        """Regional form on nodes x_i >= 0 for an odd function given by its values there."""
        n, ne, g = self.grid.n, self.ne, self.g
        v = np.asarray(half_values, dtype=float)
        h = self.grid.h
        y = h * np.arange(0, ne + 1, dtype=float)
        phi = np.empty(ne + 1)
        phi[: n + 1] = v
        phi[n + 1 :] = tail(y[n + 1 :])
        i = np.arange(n + 1)
        W = self.W
        # T(i,k) = W[|i-k|], H(i,k) = W[i+k]; end-node (k = ne) uses inner halves
        kern = np.concatenate([W[::-1], W[1:]])
        psi = phi[1:]
        Tphi = signal.fftconvolve(psi, kern, mode="full")[self.M - 1 - 1 : self.M - 1 - 1 + n + 1]
        Tsum = np.cumsum(W)[ne - i] + np.cumsum(W)[i] - W[i]  # sum_{k=1..ne} W[|i-k|]
        Hphi = signal.fftconvolve(W, psi[::-1], mode="full")[i + ne]
        Hsum = np.cumsum(W)[i + ne] - np.cumsum(W)[i]
        oT = self.O[ne - i]
        oH = self.O[ne + i]
        end = phi[ne]
        Tphi = Tphi - oT * end
        Hphi = Hphi - oH * end
        Tsum = Tsum - oT
        Hsum = Hsum - oH
        regional = (Tsum - Hsum) * v - (Tphi - Hphi)
        dm = self.tm_right[n:] - self.tm_left[n:]
        far = dm * (v - tail.right)
        if tail.kind == "algebraic":
            jr, jl = self.far_power(tail.p)
            far = far - tail.amp_right * (jr[n:] - jl[n:])
        kappa = W[i] + 2.0 * Hsum + 2.0 * self.tm_left[n:]
        out = regional + far + kappa * v
        out[0] = 0.0
        return out

    # -- dense matrices --------------------------------------------------------
    def matrix(self) -> np.ndarray:
        """Zero-tail matrix A on all interior nodes: L phi = A phi when phi vanishes outside."""
        col = np.array(self.W[: self.grid.N])
        A = -linalg.toeplitz(col)
        A[np.diag_indices_from(A)] = self.d
        return A

    def half_matrix(self, parity: str) -> np.ndarray:
        """Matrix on half-line nodes for even (x_i >= 0) or odd (x_i > 0) functions."""
        n = self.grid.n
        W = self.W
        if parity == "even":
            i = np.arange(n + 1)
            T = linalg.toeplitz(W[: n + 1])
            H = W[i[:, None] + i[None, :]].copy()
            H[:, 0] = 0.0
            A = -T - H
            A[np.diag_indices_from(A)] = self.d[n:] - H[i, i]
            return A
        if parity == "odd":
            i = np.arange(1, n + 1)
            T = linalg.toeplitz(W[:n])
            H = W[i[:, None] + i[None, :]]
            A = -T + H
            A[np.diag_indices_from(A)] = self.d[n + 1 :] + H[i - 1, i - 1]
            return A
        raise GridError("parity must be 'even' or 'odd'")


@functools.lru_cache(maxsize=8)
def discrete_operator(kernel: Kernel, grid: Grid1D, scheme: OperatorScheme | None = None) -> DiscreteOperator:
    return DiscreteOperator(kernel, grid, scheme or OperatorScheme())


def apply_operator(kernel: Kernel, phi: GridFunction, scheme: OperatorScheme | None = None) -> GridFunction:
    """Values of L phi at every grid node (tail model supplies phi beyond the grid)."""
    if phi.tail is None:
        raise GridError("missing tail model")
    op = discrete_operator(kernel, phi.grid, scheme or OperatorScheme())
    vals = op.apply(phi.values, phi.tail)
    sym = phi.symmetry
    if sym == "odd":
        vals = 0.5 * (vals - vals[::-1])
    elif sym == "even":
        vals = 0.5 * (vals + vals[::-1])
    return GridFunction(phi.grid, vals, TailModel(), sym)


def apply_operator_odd(kernel: Kernel, phi: GridFunction, scheme: OperatorScheme | None = None) -> GridFunction:
    """L phi for odd phi through the half-line regional form.

    Only the values on x >= 0 are used; the result is returned as an odd grid
    function (its x >= 0 half is the regional evaluation, x = 0 gives 0).
    """
    if phi.symmetry != "odd":
        raise GridError("apply_operator_odd needs an odd-tagged grid function")
    if not kernel.monotone:
        raise KernelError("odd reduction needs a monotone kernel")
    op = discrete_operator(kernel, phi.grid, scheme or OperatorScheme())
    _, half = phi.half()
    out = op.apply_odd(half, phi.tail)
    full = np.concatenate([-out[:0:-1], out])
    return GridFunction(phi.grid, full, TailModel(), "odd")


@dataclass
class Residual:
    values: GridFunction
    sup: float
    interval: tuple[float, float] | None


def residual(kernel: Kernel, c, phi: GridFunction, scheme: OperatorScheme | None = None,
             interval: tuple[float, float] | None = None) -> Residual:
    """L phi - c phi on the grid, with its sup norm over ``interval`` (default: all nodes)."""
    if c.grid != phi.grid:
        raise GridError("grid mismatch between potential and grid function")
    Lphi = apply_operator(kernel, phi, scheme)
    r = Lphi.values - c.values * phi.values
    x = phi.grid.x
    mask = np.ones_like(x, dtype=bool) if interval is None else (x >= interval[0]) & (x <= interval[1])
    return Residual(GridFunction(phi.grid, r, TailModel(), "none"), float(np.max(np.abs(r[mask]))), interval)


def fit_tail(grid: Grid1D, values: np.ndarray, left: float, right: float, p: float,
             fraction: float = 0.1) -> TailModel:
    """Least-squares amplitudes a_+- of phi - l_+- = a |x|^(-p) on the outer nodes."""
    x = grid.x
    v = np.asarray(values, dtype=float)
    k = max(2, int(round(fraction * grid.n)))
    xr, vr = x[-k:], v[-k:]
    xl, vl = -x[:k], v[:k]
    br, bl = xr ** (-p), xl ** (-p)
    ar = float(np.dot(vr - right, br) / np.dot(br, br))
    al = float(np.dot(vl - left, bl) / np.dot(bl, bl))
    return TailModel.algebraic(left, right, al, ar, p)


def derivative(phi: GridFunction) -> GridFunction:
    """Fourth-order centred differences (one-sided stencils at the ends), tail differentiated."""
    v = phi.values
    h = phi.grid.h
    d = np.empty_like(v)
    d[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    d[:2] = (-25 * v[0:2] + 48 * v[1:3] - 36 * v[2:4] + 16 * v[3:5] - 3 * v[4:6]) / (12 * h)
    d[-2:] = (25 * v[-2:] - 48 * v[-3:-1] + 36 * v[-4:-2] - 16 * v[-5:-3] + 3 * v[-6:-4]) / (12 * h)
    sym = {"odd": "even", "even": "odd"}.get(phi.symmetry, "none")
    if sym == "even":
        d = 0.5 * (d + d[::-1])
    elif sym == "odd":
        d = 0.5 * (d - d[::-1])
        d[phi.grid.center] = 0.0
    return GridFunction(phi.grid, d, phi.tail.derivative(), sym)

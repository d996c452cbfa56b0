"""Reference computations that share no code with the package."""
import math

import numpy as np
from scipy import integrate, special


def c1s(s):
    return 4**s * special.gamma(0.5 + s) / (math.sqrt(math.pi) * abs(special.gamma(-s)))


def arctan_layer_image(x):
    """(-Laplacian)^(1/2) of (2/pi) arctan x."""
    return (2 / np.pi) * x / (1 + x * x)


def soliton(x):
    return 2.0 / (1.0 + x * x)


def pv_apply(func, x, s, c=1.0, cut=60.0, d2=None, eps=1e-3):
    """c * PV int (u(x) - u(y)) |x - y|^(-1-2s) dy by adaptive quadrature in z = y - x.

    The symmetric second difference 2u(x) - u(x+z) - u(x-z) removes the
    singularity; with ``d2`` (the second derivative) the piece z < eps is taken
    from the Taylor term -u''(x) z^2 to avoid round-off.
    """
    def g(z):
        return (2 * func(x) - func(x + z) - func(x - z)) * z ** (-1 - 2 * s)

    lo = 0.0
    head = 0.0
    if d2 is not None:
        lo = eps
        head = -d2(x) * eps ** (2 - 2 * s) / (2 - 2 * s)
    near, _ = integrate.quad(g, lo, 1, limit=400, epsabs=1e-13, epsrel=1e-11)
    mid, _ = integrate.quad(g, 1, cut, limit=400, epsabs=1e-13, epsrel=1e-12)
    far, _ = integrate.quad(g, cut, np.inf, limit=400, epsabs=1e-13, epsrel=1e-12)
    return c * (head + near + mid + far)


def gaussian_d2(x):
    return (4 * x * x - 2) * np.exp(-x * x)


def fourier_apply_gaussian(x, s):
    """(-Laplacian)^s exp(-x^2) from the Fourier symbol |xi|^(2s)."""
    def g(xi):
        return xi ** (2 * s) * math.sqrt(math.pi) * math.exp(-xi * xi / 4) * math.cos(xi * x)

    val, _ = integrate.quad(g, 0, 60, limit=500, epsabs=1e-14, epsrel=1e-12)
    return val / math.pi


def brute_force_forms(x, h, W, sigma, tau, w, odd=False):
    """Direct double sum over all ordered node pairs with the Toeplitz weights W."""
    J1 = 0.0
    RHS = 0.0
    n = len(x)
    for i in range(n):
        for k in range(n):
            if i == k:
                continue
            if odd:
                wt = W[abs(i - k)] - W[i + k + 2]
            else:
                wt = W[abs(i - k)]
            J1 += wt * (sigma[i] - sigma[k]) ** 2 * (tau[i] ** 2 + tau[k] ** 2) * w[i] * w[k]
            RHS -= wt * (sigma[i] ** 2 - sigma[k] ** 2) * (tau[i] ** 2 - tau[k] ** 2) * w[i] * w[k]
    return h * J1, h * RHS


def monte_carlo_s_minus_d(R, samples, seed, chunk=10**6):
    """MC estimate of the integral of |x - y|^(-2) over {|x|<2R or |y|<2R} & {|x-y| >= 4R}.

    Proposal: a = one coordinate uniform on (-3R, 3R) (so some draws miss the
    region), the other at distance z with Pareto density (1/2) sqrt(4R) z^(-3/2)
    on z >= 4R and a random sign. The two choices of which coordinate is uniform
    are combined with balance-heuristic weights.
    """
    rng = np.random.default_rng(seed)
    total = 0.0
    done = 0
    L = 3 * R
    zmin = 4 * R
    while done < samples:
        m = min(chunk, samples - done)
        a = rng.uniform(-L, L, m)
        z = zmin / rng.uniform(0, 1, m) ** 2
        z = z * np.where(rng.uniform(size=m) < 0.5, -1.0, 1.0)
        pick = rng.uniform(size=m) < 0.5
        x = np.where(pick, a, a + z)
        y = np.where(pick, a - z, a)
        d = np.abs(x - y)
        qz = 0.5 * (0.5 * np.sqrt(zmin) * d ** (-1.5))
        px = np.where(np.abs(x) < L, 1 / (2 * L), 0.0) * qz
        py = np.where(np.abs(y) < L, 1 / (2 * L), 0.0) * qz
        dens = 0.5 * px + 0.5 * py
        inside = (d >= zmin) & ((np.abs(x) < 2 * R) | (np.abs(y) < 2 * R))
        f = np.where(inside, d ** (-2.0), 0.0)
        total += np.sum(f / dens)
        done += m
    return total / samples

"""Fredholm determinants of the q-Laplace transform, and its inversion.

For particle rate parameters a_i = 1 the transform G(zeta) =
E[1/((zeta q^{x_n(t)+n}; q)_inf)] admits two determinant representations:

* Mellin-Barnes type: det(I + K_zeta) on a small circle C_1 around 1 with

      K_zeta(w, w') = (1/(2 pi i)) int_{1/2 - i inf}^{1/2 + i inf}
                      pi/sin(-pi s) (-zeta)^s  h(q^s w)/h(w)  ds/(q^s w - w'),
      h(w) = (w; q)_inf^n f_t(w);

* Cauchy type: det(I + zeta Ktilde)/(zeta; q)_inf on a circle C_{0,1} around
  0 and 1 with

      Ktilde(w, w') = (1/(1-w))^n  f_t(q w)/f_t(w)  / (q w' - w).

Both are discretized by the Nystrom method with trapezoid weights on the
circle, and the determinant is a dense pivoted-LU determinant.  The Cauchy
kernel does not depend on zeta, so sweeping zeta (for the distribution
inversion contour) reuses one eigendecomposition:
det(I + zeta Ktilde) = prod_i (1 + zeta lambda_i).

The inversion formula recovers point masses:

    P(x_n(t) + n = m) = -q^m (1/(2 pi i)) oint_{C_m} (q^{m+1} zeta; q)_inf
                        G(zeta) d zeta,

with C_m a circle enclosing {q^-j: 0 <= j <= m+1} and excluding q^{-(m+2)}.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from .moments import f_ratio, f_weight
from .qfunctions import qpoch_inf, validate_q

S_MAX_DEFAULT = 12.0
GL_PER_UNIT = 24


@dataclass(frozen=True)
class KernelGrid:
    """Trapezoid discretization of a circle: nodes w_j and dz weights."""

    center: float
    radius: float
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return len(self.nodes)


def circle_grid(center, radius, M):
    if M < 4:
        raise ValueError("need at least 4 quadrature nodes")
    theta = 2.0 * np.pi * np.arange(M) / M
    e = np.exp(1j * theta)
    nodes = center + radius * e
    weights = (2j * np.pi * radius / M) * e
    return KernelGrid(center=center, radius=radius, nodes=nodes, weights=weights)


def mb_radius(q):
    """C_1 radius 0.9 (1 - sqrt q)/(1 + sqrt q), certified to keep q^s w off C_1."""
    rq = math.sqrt(q)
    return 0.9 * (1.0 - rq) / (1.0 + rq)


def mb_grid(q, M=64):
    q = validate_q(q)
    rho = mb_radius(q)
    if not math.sqrt(q) * (1.0 + rho) < 1.0 - rho:
        raise ValueError("separation q^(1/2) (1 + rho) < 1 - rho fails for this q")
    return circle_grid(1.0, rho, M)


def cauchy_grid(spec, q, M=128):
    """C_{0,1}: circle of radius 0.75 about 0.5, with weight-pole feasibility checks."""
    q = validate_q(q)
    center, radius = 0.5, 0.75
    for be in spec.beta:
        pole = -1.0 / be
        if abs(pole - center) <= radius + 1e-12:
            raise ValueError(
                f"Bernoulli weight pole at {pole:.6g} touches the Cauchy contour; "
                f"need beta < {1.0 / (radius - center):.6g}"
            )
    for al in spec.alpha:
        pole = 1.0 / al  # nearest pole q^0/alpha of the raw geometric weight
        if abs(pole - center) <= radius + 1e-12:
            raise ValueError(
                f"geometric weight pole at {pole:.6g} touches the Cauchy contour; "
                f"need alpha < {1.0 / (radius + center):.6g}"
            )
    return circle_grid(center, radius, M)


def _check_zeta(zeta):
    zeta = complex(zeta)
    if zeta.imag == 0.0 and zeta.real >= 0.0:
        raise ValueError("zeta must avoid the nonnegative real axis")
    return zeta


def _s_line(s_max, gl_per_unit):
    # Gauss-Legendre panels of unit length along Im s in [-s_max, s_max]
    xs, ws = roots_legendre(gl_per_unit)
    panels = np.arange(-s_max, s_max)
    y = (panels[:, None] + 0.5 + 0.5 * xs[None, :]).ravel()
    wy = np.broadcast_to(0.5 * ws, (len(panels), gl_per_unit)).ravel()
    return 0.5 + 1j * y, wy


def mb_kernel_matrix(spec, n, zeta, q, grid, s_max=S_MAX_DEFAULT, gl_per_unit=GL_PER_UNIT):
    """Nystrom matrix of the Mellin-Barnes kernel on ``grid`` (a C_1 grid).

    The s integral runs over Re s = 1/2 with |Im s| <= s_max; the integrand
    decays like 2 pi e^{-(pi - |arg(-zeta)|) |Im s|}, so the default window
    leaves a truncation tail below 1e-15 for zeta on the negative half-axis.
    """
    q = validate_q(q)
    zeta = _check_zeta(zeta)
    rho = grid.radius
    if not math.sqrt(q) * (1.0 + rho) < 1.0 - rho:
        raise ValueError("grid radius violates the q^s w separation bound")
    s, wy = _s_line(s_max, gl_per_unit)
    qs = np.exp(s * math.log(q))  # q^s, |q^s| = sqrt(q)
    W = grid.nodes
    # h(q^s w)/h(w) over the (s, w) grid
    shifted = qs[:, None] * W[None, :]
    ratio = (qpoch_inf(shifted, q) / qpoch_inf(W, q)[None, :]) ** n
    ratio = ratio * f_weight(spec, shifted, q) / f_weight(spec, W, q)[None, :]
    log_mz = np.log(-zeta)  # principal branch, continuous off zeta in R_+
    pref = (wy / (2.0 * np.pi)) * (np.pi / np.sin(-np.pi * s)) * np.exp(s * log_mz)
    denom = shifted[:, :, None] - W[None, None, :]
    K = np.einsum("s,sw,swv->wv", pref, ratio, 1.0 / denom)
    return K


def cauchy_kernel_matrix(spec, n, q, grid):
    """Nystrom matrix of the zeta-independent Cauchy kernel on a C_{0,1} grid."""
    q = validate_q(q)
    W = grid.nodes
    front = (1.0 / (1.0 - W)) ** n * f_ratio(spec, W, q)
    denom = q * W[None, :] - W[:, None]  # rows w, columns w'
    if np.min(np.abs(denom)) < 1e-12:
        raise ValueError("contour geometry puts q w' on top of w")
    return front[:, None] / denom


def fredholm_det(kernel_matrix, grid):
    """det(I + D) with D = kernel * weights / (2 pi i), dense pivoted LU."""
    D = kernel_matrix * (grid.weights / (2j * np.pi))[None, :]
    return complex(np.linalg.det(np.eye(grid.size) + D))


def q_laplace_mb(spec, n, zeta, q, M=64, s_max=S_MAX_DEFAULT):
    """Mellin-Barnes determinant value of the q-Laplace transform."""
    grid = mb_grid(q, M)
    K = mb_kernel_matrix(spec, n, zeta, q, grid, s_max=s_max)
    return fredholm_det(K, grid)


def cauchy_eigenvalues(spec, n, q, M=128):
    """Eigenvalues of the discretized Cauchy operator, for fast zeta sweeps."""
    grid = cauchy_grid(spec, q, M)
    K = cauchy_kernel_matrix(spec, n, q, grid)
    D = K * (grid.weights / (2j * np.pi))[None, :]
    return np.linalg.eigvals(D)


def q_laplace_cauchy(spec, n, zeta, q, M=128, eigs=None):
    """Cauchy determinant value det(I + zeta Ktilde)/(zeta; q)_inf."""
    q = validate_q(q)
    zeta = complex(zeta)
    if eigs is None:
        eigs = cauchy_eigenvalues(spec, n, q, M)
    det = np.prod(1.0 + zeta * eigs)
    return complex(det / qpoch_inf(zeta, q))


def q_laplace_direct(pmf, zeta, q):
    """sum_m pmf[m] / (zeta q^m; q)_inf, the transform of an explicit pmf."""
    q = validate_q(q)
    pmf = np.asarray(pmf, dtype=float)
    if abs(pmf.sum() - 1.0) > 1e-10:
        raise ValueError(f"pmf sums to {pmf.sum()}, not 1")
    zeta = complex(zeta)
    vals = np.empty(len(pmf), dtype=complex)
    for m in range(len(pmf)):
        x = zeta * q**m
        if x.imag == 0.0 and x.real >= 1.0 - 1e-12:
            raise ValueError(f"singular input: zeta q^{m} = {x.real} lies in [1, inf)")
        vals[m] = qpoch_inf(x, q)
    return complex(np.sum(pmf / vals))


def pmf_from_moments(moments, q):
    """Probabilities on {0..T} from the moments mu_j = E[q^{jX}], j = 0..T.

    Solves the Vandermonde system in the nodes q^m.  Entries outside
    [-1e-8, 1+1e-8] mean the support bound was wrong and raise; tiny
    violations are clipped and renormalized.
    """
    q = validate_q(q)
    mu = np.asarray(moments, dtype=float)
    T = len(mu) - 1
    V = np.power(q, np.outer(np.arange(T + 1), np.arange(T + 1)))
    p = np.linalg.solve(V, mu)
    if np.any(p < -1e-8) or np.any(p > 1.0 + 1e-8):
        raise ValueError(
            f"recovered masses outside [0, 1] beyond tolerance: min {p.min():.3e}, "
            f"max {p.max():.3e}; the stated support bound {T} is violated"
        )
    p = np.clip(p, 0.0, 1.0)
    return p / p.sum()


def inversion_contour(m, q, M=256):
    """Circle C_m enclosing {q^-j: j <= m+1} and excluding q^{-(m+2)}."""
    q = validate_q(q)
    m = int(m)
    if m < 0:
        raise ValueError("m must be >= 0")
    hi = q ** -(m + 1)
    nxt = q ** -(m + 2)
    center = (1.0 + hi) / 2.0
    r_min = (hi - 1.0) / 2.0
    r_max = nxt - center
    if not r_min < r_max:
        raise ValueError(
            f"cannot separate q^-{m + 1} from q^-{m + 2} at m = {m}"
        )
    radius = 0.5 * (r_min + r_max)
    return circle_grid(center, radius, M)


def invert_q_laplace(G, m, q, M=256):
    """Point mass P(X = m) recovered from the transform G by contour integration.

    Returns the real part; a residual imaginary part above 1e-8 triggers a
    warning since the exact integral is real.
    """
    q = validate_q(q)
    grid = inversion_contour(m, q, M)
    zs = grid.nodes
    vals = np.array([G(z) for z in zs], dtype=complex)
    integrand = qpoch_inf(q ** (m + 1) * zs, q) * vals
    total = np.sum(integrand * grid.weights)
    out = -(q**m) * total / (2j * np.pi)
    if abs(out.imag) > 1e-8:
        warnings.warn(
            f"inversion integral has imaginary residue {out.imag:.3e}", RuntimeWarning
        )
    return float(out.real)


def recover_pmf(G, support, q, M=256):
    """Invert the transform on {0..support}; returns the raw (unnormalized) masses."""
    return np.array([invert_q_laplace(G, m, q, M) for m in range(support + 1)])

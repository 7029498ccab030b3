"""q-deformed special functions underlying the q-TASEP dynamics and solvers.

Everything here is elementary numerics built on the q-Pochhammer symbol

    (a; q)_n   = prod_{i=0}^{n-1} (1 - a q^i),
    (a; q)_inf = prod_{i>=0} (1 - a q^i),

for a deformation parameter 0 < q < 1.  On top of it sit the q-binomial
coefficients, the q-geometric jump-length distribution

    p_{m,alpha}(j) = alpha^j (alpha; q)_{m-j} [m choose j]_q,   0 <= j <= m,

with its infinite-gap variant p_{inf,alpha}(j) = alpha^j (alpha; q)_inf / (q; q)_j,
the cluster coefficients

    C_a(y, s) = (-a)^s (-a; q)_{y-s} (q; q)_y / ((q; q)_{y-s} (q; q)_s),

and the elementary symmetric polynomials evaluated on the q-geometric point
e_r(1, q, ..., q^{y-1}).

All functions are pure; random sampling takes a caller-owned numpy Generator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

# Iteration guard for infinite products; far above any sane truncation depth.
QPOCH_MAX_TERMS = 100_000

# Stored tail mass below this bound for truncated infinite-support pmfs.
PMF_TAIL_TOL = 1e-15


class ConvergenceError(RuntimeError):
    """An infinite product or truncated sum failed to meet its tolerance."""


def validate_q(q):
    """Return q as float, rejecting anything outside the open interval (0, 1)."""
    q = float(q)
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie strictly inside (0, 1), got {q}")
    return q


def _unwrap(x):
    # 0-d arrays back to python scalars, everything else untouched
    x = np.asarray(x)
    return x[()] if x.ndim == 0 else x


def qpoch(a, q, n):
    """Finite q-Pochhammer symbol (a; q)_n.

    Accepts scalar or array ``a`` (real or complex); n = 0 gives the empty
    product 1 exactly.
    """
    if n < 0:
        raise ValueError(f"qpoch order must be >= 0, got {n}")
    a = np.asarray(a)
    out = np.ones(a.shape, dtype=np.result_type(a, np.float64))
    term = np.array(a, dtype=out.dtype)
    for _ in range(int(n)):
        out = out * (1.0 - term)
        term = term * q
    return _unwrap(out)


def qpoch_inf(a, q, tol=1e-16):
    """Infinite q-Pochhammer symbol (a; q)_inf.

    The product is truncated at the first index i with |a| q^i < tol * (1 - q),
    which keeps the relative truncation error below about tol.  Scalar or
    array ``a``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = validate_q(q)
    a = np.asarray(a)
    out = np.ones(a.shape, dtype=np.result_type(a, np.float64))
    term = np.array(a, dtype=out.dtype)
    threshold = tol * (1.0 - q)
    i = 0
    while np.max(np.abs(term), initial=0.0) >= threshold:
        if i >= QPOCH_MAX_TERMS:
            raise ConvergenceError(
                f"(a; q)_inf did not converge within {QPOCH_MAX_TERMS} factors "
                f"(max |a q^i| = {np.max(np.abs(term)):.3e}, threshold {threshold:.3e})"
            )
        out = out * (1.0 - term)
        term = term * q
        i += 1
    return _unwrap(out)


def q_binomial(m, j, q):
    """Gaussian binomial coefficient [m choose j]_q = (q;q)_m / ((q;q)_{m-j} (q;q)_j).

    Returns 0 for j < 0 or j > m.  Computed as a product of well-scaled ratios
    (1 - q^{m-j+i}) / (1 - q^i), which avoids the underflow of the raw
    Pochhammer quotient at large m.
    """
    m, j = int(m), int(j)
    if m < 0:
        raise ValueError(f"q_binomial needs m >= 0, got {m}")
    if j < 0 or j > m:
        return 0.0
    j = min(j, m - j)
    out = 1.0
    for i in range(1, j + 1):
        out *= (1.0 - q ** (m - j + i)) / (1.0 - q**i)
    return out


@dataclass(frozen=True)
class JumpDistribution:
    """A realized q-geometric jump distribution p_{m,alpha}.

    For finite m the pmf covers {0, ..., m} exactly.  For m = inf the pmf is
    truncated at a support point J with the remaining mass bounded by
    ``tail_bound`` (< 1e-15).  ``cdf`` has its final entry clamped to >= 1 so
    inverse-CDF sampling never runs off the stored support.
    """

    m: float  # int support bound, or math.inf
    alpha: float
    q: float
    pmf: np.ndarray
    cdf: np.ndarray
    tail_bound: float

    @property
    def support(self):
        return len(self.pmf) - 1


def jump_pmf(m, alpha, q, tail_tol=PMF_TAIL_TOL):
    """Jump-length distribution p_{m,alpha} for a gap of size m (m may be math.inf).

    Entries are generated by the ratio recurrence

        p(j+1) / p(j) = alpha (1 - q^{m-j}) / ((1 - alpha q^{m-j-1}) (1 - q^{j+1}))

    (finite m) or alpha / (1 - q^{j+1}) (infinite m), keeping every factor of
    moderate size.  The raw sum is left untouched unless it misses 1 by more
    than 1e-12, in which case a warning is raised and the pmf renormalized, so
    the normalization identity remains a genuine downstream check.
    """
    q = validate_q(q)
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha}")

    if math.isinf(m):
        probs = [qpoch_inf(alpha, q)]
        tail = math.inf
        j = 0
        while True:
            ratio_next = alpha / (1.0 - q ** (j + 1))
            # bound remaining mass by a geometric series once the ratio is < 1
            if ratio_next < 1.0:
                tail = probs[-1] * ratio_next / (1.0 - ratio_next)
                if tail < tail_tol:
                    break
            if j >= QPOCH_MAX_TERMS:
                raise ConvergenceError("p_{inf,alpha} truncation did not converge")
            probs.append(probs[-1] * ratio_next)
            j += 1
        pmf = np.array(probs)
        m_out = math.inf
    else:
        m = int(m)
        if m < 0:
            raise ValueError(f"gap size must be >= 0, got {m}")
        pmf = np.empty(m + 1)
        pmf[0] = qpoch(alpha, q, m)
        for j in range(m):
            pmf[j + 1] = pmf[j] * alpha * (1.0 - q ** (m - j)) / (
                (1.0 - alpha * q ** (m - j - 1)) * (1.0 - q ** (j + 1))
            )
        tail = 0.0
        m_out = m

    total = pmf.sum()
    if abs(total - 1.0) > 1e-12 + tail:
        warnings.warn(
            f"p_{{m,alpha}} raw sum deviates from 1 by {total - 1.0:.3e}; renormalizing",
            RuntimeWarning,
        )
        pmf = pmf / total
    cdf = np.cumsum(pmf)
    cdf[-1] = max(cdf[-1], 1.0)
    return JumpDistribution(m=m_out, alpha=alpha, q=q, pmf=pmf, cdf=cdf, tail_bound=tail)


def jump_sample(dist, rng):
    """Draw one jump length from ``dist`` by inverse-CDF lookup."""
    return int(np.searchsorted(dist.cdf, rng.random(), side="right"))


def cluster_coeff(a, y, s, q):
    """Cluster-move coefficient C_a(y, s) = (-a)^s (-a;q)_{y-s} [y choose s]_q.

    Zero outside 0 <= s <= y.
    """
    y, s = int(y), int(s)
    if s < 0 or s > y:
        return 0.0
    return (-a) ** s * qpoch(-a, q, y - s) * q_binomial(y, s, q)


def elementary_sym_q(r, y, q):
    """e_r(1, q, ..., q^{y-1}) = q^{r(r-1)/2} [y choose r]_q; zero for r > y."""
    r, y = int(r), int(y)
    if r < 0 or r > y:
        return 0.0
    return q ** (r * (r - 1) // 2) * q_binomial(y, r, q)

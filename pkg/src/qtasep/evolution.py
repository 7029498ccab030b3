"""Exact solvers for the closed moment systems on the multiplicity lattice.

The observables E[prod_{i=1}^k q^{x_{n_i}(t)+n_i}] of an N-particle q-TASEP
are indexed by multiplicity vectors y = (y_0, ..., y_N) with y_i = #{j: n_j = i}
and sum y_i = k.  They evolve by closed linear systems built from two
single-site difference operators,

    (L^(a)_i f)(y) = a (1 - q^{y_i}) (f(y with one unit moved i -> i-1) - f(y)),
    (A^(a)_i f)(y) = sum_{s=0}^{y_i} C_a(y_i, s) f(y with s units moved i -> i-1),

where C_a are the cluster coefficients from :mod:`qtasep.qfunctions`.  In the
suffix-sum enumeration produced by :func:`enumerate_Yk` every operator is
lower triangular: moving mass toward site 0 strictly decreases some suffix sum.
That makes the continuous flow a dense matrix exponential, the parallel
discrete step an explicit operator sweep, and the sequential discrete step a
forward substitution.

Values at states with y_0 > 0 are pinned to zero after every step; they encode
factors q^{x_0 + 0} for the virtual particle at +infinity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy.linalg import expm

from .qfunctions import cluster_coeff, validate_q

# Dense linear algebra only; refuse lattices beyond this many states.
DIMENSION_CAP = 20_000

ORDER_TAG = "suffix-lex-v1"


def n_to_y(n, N):
    """Multiplicity vector (y_0, ..., y_N) of a weakly decreasing index vector."""
    n = np.asarray(n, dtype=int)
    if n.size and (n.min() < 0 or n.max() > N):
        raise ValueError(f"entries of n must lie in 0..{N}")
    if np.any(n[:-1] < n[1:]):
        raise ValueError("n must be sorted weakly decreasing")
    return np.bincount(n, minlength=N + 1)


def y_to_n(y):
    """Weakly decreasing index vector whose multiplicities are y."""
    y = np.asarray(y, dtype=int)
    if y.size == 0 or y.min() < 0:
        raise ValueError("y must be a nonempty vector of nonnegative counts")
    N = len(y) - 1
    return np.repeat(np.arange(N, -1, -1), y[::-1])


def _suffix_key(y):
    # (S_1, ..., S_N) with S_i = y_i + ... + y_N; S_0 = k is constant on the
    # lattice so it is dropped.  Componentwise dominance of suffix sums implies
    # lexicographic order of these keys, so ascending lex sorting is a linear
    # extension of the triangularity partial order.
    return tuple(int(s) for s in np.cumsum(y[::-1])[::-1][1:])


def enumerate_Yk(N, k):
    """All y in Y^N_k, listed so every operator above is lower triangular."""
    if N < 1 or k < 0:
        raise ValueError("need N >= 1 and k >= 0")
    states = []

    def fill(prefix, remaining, slots):
        if slots == 1:
            states.append(tuple(prefix) + (remaining,))
            return
        for v in range(remaining + 1):
            fill(prefix + [v], remaining - v, slots - 1)

    fill([], k, N + 1)
    states.sort(key=lambda y: _suffix_key(np.asarray(y)))
    return states


@dataclass(frozen=True)
class Lattice:
    """Enumerated Y^N_k with index lookup, in triangular order."""

    N: int
    k: int
    states: tuple
    index: dict

    @property
    def dim(self):
        return len(self.states)


@lru_cache(maxsize=None)
def build_lattice(N, k):
    dim = comb(N + k, k)
    if dim > DIMENSION_CAP:
        raise ValueError(
            f"lattice Y^{N}_{k} has {dim} states, beyond the dense cap {DIMENSION_CAP}"
        )
    states = tuple(enumerate_Yk(N, k))
    index = {y: i for i, y in enumerate(states)}
    return Lattice(N=N, k=k, states=states, index=index)


def _moved(y, i, s):
    # y with s units moved from site i to site i-1
    out = list(y)
    out[i - 1] += s
    out[i] -= s
    return tuple(out)


def zero_y0(h, lat):
    """Pin entries with y_0 > 0 to zero (virtual-particle convention)."""
    out = np.array(h, dtype=float)
    for idx, y in enumerate(lat.states):
        if y[0] > 0:
            out[idx] = 0.0
    return out


def apply_L(a, i, h, lat, q):
    """Apply the rate operator L^(a)_i to a vector over the lattice."""
    if not 1 <= i <= lat.N:
        raise ValueError(f"site index {i} outside 1..{lat.N}")
    q = validate_q(q)
    h = np.asarray(h, dtype=float)
    out = np.zeros(lat.dim)
    for idx, y in enumerate(lat.states):
        yi = y[i]
        if yi == 0:
            continue
        out[idx] = a * (1.0 - q**yi) * (h[lat.index[_moved(y, i, 1)]] - h[idx])
    return out


def apply_A(a, i, h, lat, q):
    """Apply the cluster operator A^(a)_i to a vector over the lattice."""
    if not 1 <= i <= lat.N:
        raise ValueError(f"site index {i} outside 1..{lat.N}")
    q = validate_q(q)
    h = np.asarray(h, dtype=float)
    out = np.zeros(lat.dim)
    rows = {}
    for idx, y in enumerate(lat.states):
        yi = y[i]
        if yi not in rows:
            rows[yi] = [cluster_coeff(a, yi, s, q) for s in range(yi + 1)]
        coeffs = rows[yi]
        acc = 0.0
        for s in range(yi + 1):
            acc += coeffs[s] * h[lat.index[_moved(y, i, s)]]
        out[idx] = acc
    return out


def solve_A(a, i, g, lat, q):
    """Solve A^(a)_i f = g by forward substitution in triangular order.

    The diagonal entry at y is C_a(y_i, 0) = (-a; q)_{y_i}, nonzero for a > -1.
    """
    if not 1 <= i <= lat.N:
        raise ValueError(f"site index {i} outside 1..{lat.N}")
    q = validate_q(q)
    g = np.asarray(g, dtype=float)
    f = np.zeros(lat.dim)
    rows = {}
    for idx, y in enumerate(lat.states):
        yi = y[i]
        if yi not in rows:
            rows[yi] = [cluster_coeff(a, yi, s, q) for s in range(yi + 1)]
        coeffs = rows[yi]
        if coeffs[0] == 0.0:
            raise ZeroDivisionError(
                f"singular diagonal C_a(y_i, 0) = 0 at y_i = {yi} for a = {a}"
            )
        acc = g[idx]
        for s in range(1, yi + 1):
            acc -= coeffs[s] * f[lat.index[_moved(y, i, s)]]
        f[idx] = acc / coeffs[0]
    return f


def operator_matrix(apply_fn, lat):
    """Dense matrix of a linear operator given by its apply function."""
    M = np.zeros((lat.dim, lat.dim))
    for col in range(lat.dim):
        e = np.zeros(lat.dim)
        e[col] = 1.0
        M[:, col] = apply_fn(e)
    return M


def generator_matrix(a, lat, q):
    """Sum of the L operators: the Markov generator of the moment system."""
    a = np.asarray(a, dtype=float)
    M = np.zeros((lat.dim, lat.dim))
    for i in range(1, lat.N + 1):
        M += operator_matrix(lambda h, i=i: apply_L(a[i - 1], i, h, lat, q), lat)
    return M


def step_init_data(lat):
    """Observable data for step initial condition: 1 wherever y_0 = 0."""
    return np.array([0.0 if y[0] > 0 else 1.0 for y in lat.states])


def observable_data(x0, lat, q):
    """Observable data prod_i q^{(x0_i + i) y_i} for an arbitrary start x0."""
    q = validate_q(q)
    x0 = np.asarray(x0, dtype=int)
    if len(x0) != lat.N:
        raise ValueError(f"x0 must have length {lat.N}")
    out = np.empty(lat.dim)
    for idx, y in enumerate(lat.states):
        if y[0] > 0:
            out[idx] = 0.0
            continue
        val = 1.0
        for i in range(1, lat.N + 1):
            if y[i]:
                val *= q ** ((int(x0[i - 1]) + i) * y[i])
        out[idx] = val
    return out


def solve_poisson_true(h0, t, a, q, lat):
    """Continuous-time solution h(t) = exp(t sum_i L^(a_i)_i) h0."""
    if t < 0:
        raise ValueError("t must be >= 0")
    h0 = np.asarray(h0, dtype=float)
    if t == 0:
        return zero_y0(h0, lat)
    M = generator_matrix(a, lat, q)
    return zero_y0(expm(t * M) @ h0, lat)


def step_geometric_true(h, alpha, a, q, lat):
    """One parallel-update step: A^(-a_1 alpha)_1 ... A^(-a_N alpha)_N h.

    Site N acts first (rightmost factor of the composition).
    """
    a = np.asarray(a, dtype=float)
    if np.any(a * alpha >= 1.0):
        raise ValueError(f"need a_i * alpha < 1, got max {np.max(a * alpha)}")
    out = np.asarray(h, dtype=float)
    for i in range(lat.N, 0, -1):
        out = apply_A(-a[i - 1] * alpha, i, out, lat, q)
    return zero_y0(out, lat)


def step_bernoulli_true(h, beta, a, q, lat):
    """One sequential-update step, solving the implicit system

        A^(a_1 beta)_1 ... A^(a_N beta)_N h_next
            = A^(q a_1 beta)_1 ... A^(q a_N beta)_N h

    by forward substitution, one triangular operator at a time.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    a = np.asarray(a, dtype=float)
    rhs = np.asarray(h, dtype=float)
    for i in range(lat.N, 0, -1):
        rhs = apply_A(q * a[i - 1] * beta, i, rhs, lat, q)
    out = rhs
    for i in range(1, lat.N + 1):
        out = solve_A(a[i - 1] * beta, i, out, lat, q)
    return zero_y0(out, lat)


def run_true(h0, lat, a, q, flavor, t, alpha=(), beta=(), gamma=0.0):
    """Evolve observable data through one flavor, or the combined process.

    ``flavor`` is one of ``poisson | geometric | bernoulli | combined``.  For
    discrete flavors ``t`` counts steps and consumes the first ``t`` schedule
    entries; ``combined`` runs the Poisson flow for ``gamma`` and then every
    scheduled geometric and Bernoulli step.
    """
    h = np.asarray(h0, dtype=float)
    if flavor == "poisson":
        return solve_poisson_true(h, t, a, q, lat)
    if flavor == "geometric":
        t = int(t)
        if len(alpha) < t:
            raise ValueError(f"alpha schedule has {len(alpha)} entries, need {t}")
        for s in range(t):
            h = step_geometric_true(h, alpha[s], a, q, lat)
        return h
    if flavor == "bernoulli":
        t = int(t)
        if len(beta) < t:
            raise ValueError(f"beta schedule has {len(beta)} entries, need {t}")
        for s in range(t):
            h = step_bernoulli_true(h, beta[s], a, q, lat)
        return h
    if flavor == "combined":
        h = solve_poisson_true(h, gamma, a, q, lat)
        for al in alpha:
            h = step_geometric_true(h, al, a, q, lat)
        for be in beta:
            h = step_bernoulli_true(h, be, a, q, lat)
        return h
    raise ValueError(f"unknown flavor {flavor!r}")


def position_moments(n, jmax, a, q, flavor, t, alpha=(), beta=(), gamma=0.0):
    """Moments mu_j = E[q^{j (x_n(t) + n)}] for j = 0..jmax, from step data.

    Each j uses the lattice Y^n_j with all multiplicity at site n; particles
    beyond n never influence x_n, so N = n suffices.
    """
    a = np.asarray(a, dtype=float)[:n]
    out = [1.0]
    for j in range(1, jmax + 1):
        lat = build_lattice(n, j)
        h = run_true(step_init_data(lat), lat, a, q, flavor, t, alpha, beta, gamma)
        y = tuple([0] * n + [j])
        out.append(float(h[lat.index[y]]))
    return np.array(out)


def observable_to_json(h, lat):
    return json.dumps(
        {"N": lat.N, "k": lat.k, "order": ORDER_TAG, "values": list(map(float, h))}
    )


def observable_from_json(text):
    d = json.loads(text)
    if d.get("order") != ORDER_TAG:
        raise ValueError(f"unsupported enumeration order {d.get('order')!r}")
    lat = build_lattice(int(d["N"]), int(d["k"]))
    values = np.asarray(d["values"], dtype=float)
    if len(values) != lat.dim:
        raise ValueError(f"expected {lat.dim} values, got {len(values)}")
    return values, lat

"""Nested contour integrals for q-TASEP moments, and operator-level checks.

The k-fold moment integral evaluated here is

    m(t; n) = (-1)^k q^{k(k-1)/2} / (2 pi i)^k
              int ... int  prod_{A<B} (z_A - z_B)/(z_A - q z_B)
                           prod_j [ prod_{i<=n_j} a_i/(a_i - z_j) ]
                           [f(q z_j)/f(z_j)]  dz_j / z_j,

with the per-flavor weight ratios

    poisson:   e^{(q-1) t z}
    geometric: prod_{s<=t} (1 - alpha_s z)
    bernoulli: prod_{s<=t} (1 + q beta_s z)/(1 + beta_s z)

and the combined process multiplying all three.  Contours are k nested
circles with a common center: circle A contains every a_i and the q-image of
circle A+1 while excluding 0 (hence the whole left half-plane, where the
Bernoulli poles -1/beta_s live).

Quadrature is the product trapezoid rule on equispaced, conjugate-symmetric
nodes, spectrally accurate for these analytic integrands.  One pass computes
the integral for every index table (v_1, ..., v_k) in {0..N}^k at once, so a
single grid serves whole families of moment and residual checks, including
the unsorted index vectors needed by the free evolution equations.

The module also evaluates the first Macdonald difference operator (at
Macdonald parameter t = 0),

    D_n = sum_{i<=n} prod_{j<=n, j != i} (-x_j)/(x_i - x_j)  T_{q,x_i},

by recursive expansion over q-shift multi-indices, which powers the
commutation-relation and moment-equality checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qfunctions import ConvergenceError, qpoch_inf, validate_q

QUADRATURE_DOUBLING_TOL = 1e-9


class ContourError(ValueError):
    """A contour family violates one of its geometric requirements."""


@dataclass(frozen=True)
class ContourCircle:
    center: float
    radius: float
    nodes: int

    def __post_init__(self):
        if self.radius <= 0 or self.center <= 0:
            raise ContourError("circles need positive center and radius")
        if self.nodes < 4 or self.nodes % 2:
            raise ContourError("node count must be an even integer >= 4")


@dataclass(frozen=True)
class ContourFamily:
    """Nested circles, outermost first."""

    circles: tuple

    @property
    def k(self):
        return len(self.circles)

    def doubled(self):
        return ContourFamily(
            tuple(
                ContourCircle(c.center, c.radius, 2 * c.nodes) for c in self.circles
            )
        )


def circle_quadrature(circle):
    """Nodes z_m and weights w_m with sum f(z_m) w_m ~ closed contour integral of f dz."""
    theta = 2.0 * np.pi * np.arange(circle.nodes) / circle.nodes
    e = np.exp(1j * theta)
    z = circle.center + circle.radius * e
    w = (2j * np.pi * circle.radius / circle.nodes) * e
    return z, w


def validate_contours(family, q, a, beta=()):
    """Check nesting, pole containment and exclusions; raise with the violated bound."""
    q = validate_q(q)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    circles = family.circles
    for A in range(len(circles) - 1):
        outer, inner = circles[A], circles[A + 1]
        lhs = abs(outer.center - q * inner.center) + q * inner.radius
        if not lhs < outer.radius:
            raise ContourError(
                f"nesting fails between circles {A + 1} and {A + 2}: "
                f"|c_A - q c_B| + q r_B = {lhs:.6g} must be < r_A = {outer.radius:.6g}"
            )
        if not inner.radius < outer.radius + abs(outer.center - inner.center):
            raise ContourError("inner circle escapes the outer one")
    innermost = circles[-1]
    worst = np.max(np.abs(a - innermost.center))
    if not worst < innermost.radius:
        raise ContourError(
            f"containment fails: max |a_i - c| = {worst:.6g} must be < r_k = "
            f"{innermost.radius:.6g}"
        )
    for A, c in enumerate(circles):
        if not c.radius < c.center:
            raise ContourError(
                f"exclusion fails on circle {A + 1}: r = {c.radius:.6g} must be < "
                f"c = {c.center:.6g} so that 0 and the left half-plane stay outside"
            )
    for b in np.atleast_1d(np.asarray(beta, dtype=float)):
        pole = -1.0 / b
        for A, c in enumerate(circles):
            if abs(pole - c.center) <= c.radius:
                raise ContourError(
                    f"circle {A + 1} swallows the weight pole at {pole:.6g}"
                )


def default_contours(k, q, a, margin=0.1, gap=0.05, nodes=None):
    """Common-center nested family realizing the contour requirements.

    Center c = (min a + max a)/2; the innermost radius is max|a_i - c| +
    margin*c and each enclosing radius is (1-q)c + q r_inner + gap*c.  Fails
    loudly when the construction cannot exclude 0.
    """
    q = validate_q(q)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if np.any(a <= 0):
        raise ValueError("rate parameters a_i must be > 0")
    if k < 1:
        raise ValueError("k must be >= 1")
    c = (a.min() + a.max()) / 2.0
    radii = [np.max(np.abs(a - c)) + margin * c]
    for _ in range(k - 1):
        radii.append((1.0 - q) * c + q * radii[-1] + gap * c)
    radii = radii[::-1]  # outermost first
    if nodes is None:
        nodes = {1: (256,), 2: (320, 192), 3: (384, 320, 192)}.get(
            k, tuple(448 for _ in range(k))
        )
    elif isinstance(nodes, int):
        nodes = tuple(nodes for _ in range(k))
    family = ContourFamily(
        tuple(ContourCircle(c, r, m) for r, m in zip(radii, nodes))
    )
    validate_contours(family, q, a)
    return family


@dataclass(frozen=True)
class MomentSpec:
    """Which process ran and for how long; fixes the integrand weight ratio.

    For discrete flavors ``t`` is the step count and the schedules must carry
    at least ``t`` entries.  The combined flavor runs the Poisson flow for
    ``gamma`` plus every scheduled discrete step.
    """

    flavor: str
    t: float = 0.0
    alpha: tuple = ()
    beta: tuple = ()
    gamma: float = 0.0

    def __post_init__(self):
        if self.flavor not in ("poisson", "geometric", "bernoulli", "combined"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        object.__setattr__(self, "alpha", tuple(float(x) for x in self.alpha))
        object.__setattr__(self, "beta", tuple(float(x) for x in self.beta))
        if self.flavor == "geometric" and len(self.alpha) < self.t:
            raise ValueError("alpha_schedule shorter than the step count")
        if self.flavor == "bernoulli" and len(self.beta) < self.t:
            raise ValueError("beta_schedule shorter than the step count")

    def advanced(self, steps=1):
        """Same spec with ``steps`` more discrete time steps."""
        return MomentSpec(self.flavor, self.t + steps, self.alpha, self.beta, self.gamma)


def f_ratio(spec, z, q):
    """Weight ratio f(q z)/f(z) for the spec's flavor, vectorized in z.

    The geometric ratio telescopes to the finite product prod_s (1 - alpha_s z),
    so no infinite Pochhammers ever enter the integrand.
    """
    q = validate_q(q)
    z = np.asarray(z, dtype=complex)
    if spec.flavor == "poisson":
        poisson_time, alphas, betas = spec.t, (), ()
    elif spec.flavor == "geometric":
        poisson_time, alphas, betas = 0.0, spec.alpha[: int(spec.t)], ()
    elif spec.flavor == "bernoulli":
        poisson_time, alphas, betas = 0.0, (), spec.beta[: int(spec.t)]
    else:
        poisson_time, alphas, betas = spec.gamma, spec.alpha, spec.beta
    out = np.exp((q - 1.0) * poisson_time * z) if poisson_time else np.ones_like(z)
    for al in alphas:
        out = out * (1.0 - al * z)
    for be in betas:
        denom = 1.0 + be * z
        if np.any(np.abs(denom) < 1e-12):
            raise ZeroDivisionError(f"weight ratio pole at z = {-1.0 / be}")
        out = out * (1.0 + q * be * z) / denom
    return out


def f_weight(spec, z, q):
    """The raw weight f_t(z) itself (not the ratio); needed by kernel code."""
    q = validate_q(q)
    z = np.asarray(z, dtype=complex)
    out = np.ones_like(z)
    if spec.flavor == "poisson":
        out = out * np.exp(spec.t * z)
    elif spec.flavor == "geometric":
        for s in range(int(spec.t)):
            out = out / qpoch_inf(spec.alpha[s] * z, q)
    elif spec.flavor == "bernoulli":
        for s in range(int(spec.t)):
            out = out * (1.0 + spec.beta[s] * z)
    else:
        raise ValueError("raw weight is only defined for the pure flavors")
    return out


def _pole_matrix(a, z):
    # P[v, m] = prod_{i<=v} a_i / (a_i - z_m), for v = 0..N
    N = len(a)
    P = np.empty((N + 1, len(z)), dtype=complex)
    P[0] = 1.0
    for v in range(1, N + 1):
        P[v] = P[v - 1] * a[v - 1] / (a[v - 1] - z)
    return P


def moment_table(spec, a, q, contours, sum_z=False):
    """Integral values for every index combination, as an (N+1)^k array.

    ``table[v_1, ..., v_k]`` is the nested integral with pole products of
    depths v_1, ..., v_k on circles 1..k; sorted index vectors give the
    process moments, arbitrary ones the free-equation grid values.  With
    ``sum_z`` the integrand carries an extra factor sum_j z_j (used for the
    exact time derivative of the Poisson flow).
    """
    q = validate_q(q)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    validate_contours(contours, q, a, beta=spec.beta)
    k = contours.k
    N = len(a)
    nodes, base_w, poles = [], [], []
    for circ in contours.circles:
        z, w = circle_quadrature(circ)
        nodes.append(z)
        base_w.append(w * f_ratio(spec, z, q) / z)
        poles.append(_pole_matrix(a, z))
    pref = (-1.0) ** k * q ** (k * (k - 1) // 2) / (2j * np.pi) ** k

    shape = (N + 1,) * k
    table = np.zeros(shape, dtype=complex)

    def cross(zA, zB):
        return (zA - zB) / (zA - q * zB)

    if k == 1:
        z1, w1 = nodes[0], base_w[0]
        integ = w1 * (z1 if sum_z else 1.0)
        table[:] = poles[0] @ integ
        return pref * table

    # python loops fix the nodes of the outer k-2 circles; the innermost two
    # circles are contracted as one vectorized matrix product, and the outer
    # pole factors are attached afterwards as an outer product
    def rec(level, weight_acc, zsum_acc, cross_state, pole_cols):
        if level == k - 2:
            zA, wA = nodes[level], base_w[level]
            zB, wB = nodes[level + 1], base_w[level + 1]
            T = (
                (cross_state[level] * wA)[:, None]
                * (cross_state[level + 1] * wB)[None, :]
                * cross(zA[:, None], zB[None, :])
                * weight_acc
            )
            if sum_z:
                T = T * (zsum_acc + zA[:, None] + zB[None, :])
            M = poles[level] @ T @ poles[level + 1].T
            block = M
            for col in reversed(pole_cols):
                block = np.multiply.outer(col, block)
            table[...] += block
            return
        zA, wA = nodes[level], base_w[level]
        for m in range(len(zA)):
            zval = zA[m]
            new_cross = list(cross_state)
            for j in range(level + 1, k):
                new_cross[j] = cross_state[j] * cross(zval, nodes[j])
            rec(
                level + 1,
                weight_acc * wA[m] * cross_state[level][m],
                zsum_acc + zval,
                new_cross,
                pole_cols + [poles[level][:, m]],
            )

    ones = [np.ones(len(z), dtype=complex) for z in nodes]
    rec(0, 1.0 + 0j, 0.0 + 0j, ones, [])
    return pref * table


def nested_moments(spec, n_list, a, q, contours):
    """Moment integrals for a list of weakly decreasing index vectors."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    k = contours.k
    arrs = []
    for n in n_list:
        n = np.atleast_1d(np.asarray(n, dtype=int))
        if len(n) != k:
            raise ValueError(f"index vector {n} does not match k = {k}")
        if np.any(n < 0) or np.any(n > len(a)):
            raise ValueError(f"indices must lie in 0..{len(a)}")
        if np.any(n[:-1] < n[1:]):
            raise ValueError(f"index vector {n} must be sorted weakly decreasing")
        arrs.append(n)
    table = moment_table(spec, a, q, contours)
    return np.array([table[tuple(n)] for n in arrs])


def nested_moment(spec, n, a, q, contours, check=False):
    """Single moment integral; with ``check`` the node counts are doubled and a
    change above 1e-9 raises :class:`ConvergenceError`."""
    value = nested_moments(spec, [n], a, q, contours)[0]
    if check:
        refined = nested_moments(spec, [n], a, q, contours.doubled())[0]
        if abs(refined - value) > QUADRATURE_DOUBLING_TOL:
            raise ConvergenceError(
                f"moment integral moved by {abs(refined - value):.3e} under node doubling"
            )
        return refined
    return value


def moment_k1_residues(spec, n, a, q):
    """Closed-form k = 1 moment by residues: sum_i f-ratio(a_i) prod_{j != i} a_j/(a_j - a_i)."""
    q = validate_q(q)
    n = int(n)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if n == 0:
        return 0.0
    sub = a[:n]
    if len(np.unique(sub)) != n:
        raise ValueError("residue evaluation needs distinct a_1..a_n")
    total = 0.0
    for i in range(n):
        prod = 1.0
        for j in range(n):
            if j != i:
                prod *= sub[j] / (sub[j] - sub[i])
        total += prod * float(np.real(f_ratio(spec, sub[i], q)))
    return total


# ---------------------------------------------------------------------------
# free evolution equation residuals on the full grid


def _grad_product_expand(table, n, xs):
    """Evaluate prod_i [(1+x_i) I - x_i S_i] applied to table values at n.

    S_i lowers coordinate i by one; expansion over the 2^k shift subsets.
    """
    k = len(n)
    total = 0.0 + 0j
    for mask in range(1 << k):
        coeff = 1.0
        shifted = list(n)
        for i in range(k):
            if mask >> i & 1:
                coeff *= -xs[i]
                shifted[i] -= 1
            else:
                coeff *= 1.0 + xs[i]
        total += coeff * table[tuple(shifted)]
    return total


def _require_interior(n):
    n = np.atleast_1d(np.asarray(n, dtype=int))
    if np.any(n < 1):
        raise ValueError(
            "free-equation stencils need every n_i >= 1 so shifted points stay on the grid"
        )
    return n


def free_equation_residual(spec, n, a, q, contours):
    """Max residual of the flavor's free evolution equation at grid point n.

    ``n`` need not be sorted.  The Poisson time derivative is exact (extra
    sum_j z_j factor in the integrand); the discrete flavors compare one full
    step against the finite-difference operator product.
    """
    q = validate_q(q)
    n = _require_interior(n)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if np.any(n > len(a)):
        raise ValueError("n_i beyond the particle count")
    if spec.flavor == "poisson":
        U = moment_table(spec, a, q, contours)
        Udot = (q - 1.0) * moment_table(spec, a, q, contours, sum_z=True)
        rhs = 0.0 + 0j
        for i in range(len(n)):
            shifted = list(n)
            shifted[i] -= 1
            rhs += a[n[i] - 1] * (1.0 - q) * (U[tuple(shifted)] - U[tuple(n)])
        return float(abs(Udot[tuple(n)] - rhs))
    if spec.flavor == "geometric":
        alpha_next = spec.alpha[int(spec.t)]
        U_now = moment_table(spec, a, q, contours)
        U_next = moment_table(spec.advanced(), a, q, contours)
        xs = [-a[v - 1] * alpha_next for v in n]
        return float(abs(U_next[tuple(n)] - _grad_product_expand(U_now, n, xs)))
    if spec.flavor == "bernoulli":
        beta_next = spec.beta[int(spec.t)]
        U_now = moment_table(spec, a, q, contours)
        U_next = moment_table(spec.advanced(), a, q, contours)
        xs = [a[v - 1] * beta_next for v in n]
        lhs = _grad_product_expand(U_next, n, xs)
        rhs = _grad_product_expand(U_now, n, [q * x for x in xs])
        return float(abs(lhs - rhs))
    raise ValueError(f"free equation residual undefined for flavor {spec.flavor!r}")


def boundary_residual(spec, n, i, a, q, contours):
    """|([grad]_i - q [grad]_{i+1}) u| at a point with n_i = n_{i+1}."""
    q = validate_q(q)
    n = _require_interior(n)
    i = int(i)
    if not 1 <= i <= len(n) - 1:
        raise ValueError(f"pair index {i} outside 1..{len(n) - 1}")
    if n[i - 1] != n[i]:
        raise ValueError(f"boundary residual needs n_{i} = n_{i + 1}")
    U = moment_table(spec, a, q, contours)
    down_i = list(n)
    down_i[i - 1] -= 1
    down_j = list(n)
    down_j[i] -= 1
    val = U[tuple(down_i)] - q * U[tuple(down_j)] - (1.0 - q) * U[tuple(n)]
    return float(abs(val))


# ---------------------------------------------------------------------------
# Macdonald first difference operator at Macdonald parameter t = 0

MACDONALD_EVAL_CAP = 1_000_000


def _shift_coeffs(v):
    # coefficients prod_{j != i} (-v_j)/(v_i - v_j) over the active variables
    n = len(v)
    out = np.empty(n)
    for i in range(n):
        prod = 1.0
        for j in range(n):
            if j == i:
                continue
            diff = v[i] - v[j]
            if abs(diff) < 1e-14 * max(abs(v[i]), abs(v[j]), 1.0):
                raise ZeroDivisionError(
                    "coincident evaluation points make the shift coefficients singular"
                )
            prod *= -v[j] / diff
        out[i] = prod
    return out


def macdonald_apply(ops, leaf, x, q):
    """Apply a composition of difference operators to a multiplicative leaf.

    ``ops`` lists, outermost first, the variable counts n of each D_n factor.
    ``leaf(shift)`` returns the value of the base function at the point
    (q^{shift_1} x_1, ..., q^{shift_len} x_len).  Memoization is keyed by
    (depth, shift); the total number of expanded evaluations is capped.
    """
    q = validate_q(q)
    x = np.asarray(x, dtype=float)
    memo = {}
    counter = [0]

    def value(depth, shift):
        key = (depth, shift)
        hit = memo.get(key)
        if hit is not None:
            return hit
        counter[0] += 1
        if counter[0] > MACDONALD_EVAL_CAP:
            raise ValueError(
                f"difference-operator expansion exceeded {MACDONALD_EVAL_CAP} evaluations"
            )
        if depth == len(ops):
            out = leaf(shift)
        else:
            nvars = ops[depth]
            v = x[:nvars] * np.power(q, shift[:nvars])
            coeffs = _shift_coeffs(v)
            out = 0.0
            for i in range(nvars):
                new_shift = shift[:i] + (shift[i] + 1,) + shift[i + 1 :]
                out += coeffs[i] * value(depth + 1, new_shift)
        memo[key] = out
        return out

    return value(0, (0,) * len(x))


def macdonald_apply_D(nvars, power, f, x, q):
    """((D_nvars)^power F)(x) for the product function F = prod_i f(x_i)."""
    if power < 0:
        raise ValueError("power must be >= 0")
    x = np.asarray(x, dtype=float)
    if np.any(x == 0):
        raise ValueError("evaluation points must be nonzero")

    def leaf(shift):
        out = 1.0
        for xi, si in zip(x, shift):
            out *= f(q**si * xi)
        return out

    return macdonald_apply([nvars] * power, leaf, x, q)


def verify_commutation(nvars, k, x, f, q):
    """Residual of [ (D_n)^k, sum_{i<=n} x_i ] = (1-q^k) x_n (D_{n-1} - D_n)(D_n)^{k-1}.

    Evaluated on F = prod f(x_i) at the point x; needs nvars >= 2 since the
    right-hand side references D_{n-1}.
    """
    if nvars < 2:
        raise ValueError("the commutation check needs at least two variables")
    if k < 1:
        raise ValueError("k must be >= 1")
    q = validate_q(q)
    x = np.asarray(x, dtype=float)

    def leaf_F(shift):
        out = 1.0
        for xi, si in zip(x, shift):
            out *= f(q**si * xi)
        return out

    def leaf_pF(shift):
        p = sum(q ** shift[i] * x[i] for i in range(nvars))
        return p * leaf_F(shift)

    d_k_pF = macdonald_apply([nvars] * k, leaf_pF, x, q)
    d_k_F = macdonald_apply([nvars] * k, leaf_F, x, q)
    p_at_x = float(np.sum(x[:nvars]))
    lhs = d_k_pF - p_at_x * d_k_F

    lower = macdonald_apply([nvars - 1] + [nvars] * (k - 1), leaf_F, x, q)
    rhs = (1.0 - q**k) * x[nvars - 1] * (lower - d_k_F)
    return float(abs(lhs - rhs))


def verify_moment_equality(y, gamma, a, q, contours=None):
    """|difference| between the difference-operator moment and the contour moment.

    ``y = (y_0, ..., y_N)`` with y_0 = 0 selects the operator word
    (D_1)^{y_1} ... (D_N)^{y_N} applied to the plancherel-type generating
    function prod_i e^{gamma x_i}; the contour side is the Poisson moment of
    duration gamma at the matching sorted index vector.
    """
    from .evolution import y_to_n

    y = np.asarray(y, dtype=int)
    if y[0] != 0:
        raise ValueError("y_0 must be 0")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    N = len(a)
    if len(y) != N + 1:
        raise ValueError(f"y must have length {N + 1}")
    k = int(y.sum())
    if k == 0:
        return 0.0

    ops = []
    for site in range(1, N + 1):
        ops.extend([site] * int(y[site]))

    def leaf(shift):
        return math.exp(gamma * float(np.sum(np.power(q, shift) * a)))

    d_side = macdonald_apply(ops, leaf, a, q) / math.exp(gamma * float(np.sum(a)))

    if contours is None:
        contours = default_contours(k, q, a)
    spec = MomentSpec("poisson", t=gamma)
    contour_side = nested_moment(spec, y_to_n(y), a, q, contours)
    return float(abs(d_side - contour_side.real))

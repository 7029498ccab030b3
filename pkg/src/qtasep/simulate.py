"""Stochastic simulators for the three q-TASEP flavors and their dual chains.

State is a strictly decreasing integer vector x_1 > x_2 > ... > x_N with a
virtual particle x_0 = +infinity, so gap_1 is infinite and particle 1 always
jumps freely.  Three dynamics share the state space:

* poisson: particle i jumps right at exponential rate a_i (1 - q^{gap_i}),
  simulated exactly event by event;
* geometric: at each discrete step every particle independently jumps by
  j ~ p_{gap_i, a_i alpha_{t+1}} (parallel update);
* bernoulli: particles update in order i = 1..N, each moving by at most one
  site with probabilities coupled to whether particle i-1 just moved
  (sequential update).

The Monte Carlo engine vectorizes trajectories in fixed-size batches.  Batch b
draws from a generator seeded by SeedSequence((master_seed, b)), and batch
partials are reduced in index order, so estimates are bit-identical for any
worker count.  A zero-range chain on sites 0..N (site 0 absorbing) provides
the duality checks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .qfunctions import jump_pmf, validate_q

DEFAULT_BATCH = 1 << 16


@dataclass
class ProcessParams:
    """Rate parameters a_i, deformation q and the discrete-time jump schedules.

    ``alpha[s]`` and ``beta[s]`` are the parameters used for step s+1.  The
    well-definedness constraint a_i * alpha_s < 1 is enforced here once.
    """

    a: np.ndarray
    q: float
    alpha: np.ndarray = field(default_factory=lambda: np.array([]))
    beta: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        self.a = np.atleast_1d(np.asarray(self.a, dtype=float))
        self.q = validate_q(self.q)
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if np.any(self.a <= 0):
            raise ValueError("particle rate parameters a_i must be > 0")
        if self.alpha.size:
            if np.any((self.alpha <= 0) | (self.alpha >= 1)):
                raise ValueError("alpha_schedule entries must lie in (0, 1)")
            worst = np.max(self.a) * np.max(self.alpha)
            if worst >= 1.0:
                raise ValueError(
                    f"need a_i * alpha_t < 1 for all i, t; worst product is {worst}"
                )
        if self.beta.size and np.any(self.beta <= 0):
            raise ValueError("beta_schedule entries must be > 0")
        self.uniform_a = bool(np.all(self.a == self.a[0]))

    @property
    def N(self):
        return len(self.a)

    def alpha_at(self, t_index):
        if t_index >= len(self.alpha):
            raise ValueError(
                f"alpha_schedule has {len(self.alpha)} entries, need index {t_index}"
            )
        return float(self.alpha[t_index])

    def beta_at(self, t_index):
        if t_index >= len(self.beta):
            raise ValueError(
                f"beta_schedule has {len(self.beta)} entries, need index {t_index}"
            )
        return float(self.beta[t_index])


def step_initial(N):
    """Step initial condition x_i = -i (fully jammed)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return -np.arange(1, N + 1)


def check_ordered(x):
    x = np.asarray(x)
    if np.any(x[..., :-1] <= x[..., 1:]):
        raise ValueError("positions must be strictly decreasing")


def observable_q(x, n, q):
    """prod_i q^{x_{n_i} + n_i}, with q^{x_0 + 0} = 0 for the virtual particle."""
    q = validate_q(q)
    x = np.asarray(x, dtype=int)
    n = np.atleast_1d(np.asarray(n, dtype=int))
    if n.size and (n.min() < 0 or n.max() > len(x)):
        raise ValueError(f"indices n must lie in 0..{len(x)}")
    if np.any(n == 0):
        return 0.0
    return float(np.prod(q ** (x[n - 1] + n).astype(float)))


# ---------------------------------------------------------------------------
# batched flavor kernels; X has shape (batch, N) and is updated in place


def _rates(X, a, q):
    # particle 1 sees the virtual infinite gap, so its rate is a_1 exactly
    r = a[1:] * (1.0 - q ** (X[:, :-1] - X[:, 1:] - 1))
    return np.concatenate([np.broadcast_to(a[0], (X.shape[0], 1)), r], axis=1)


def _poisson_batch(X, duration, params, rng):
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if duration == 0 or X.shape[1] == 0:
        return
    a, q = params.a, params.q
    B = X.shape[0]
    t = np.zeros(B)
    alive = np.ones(B, dtype=bool)
    while alive.any():
        rates = _rates(X, a, q)
        csum = np.cumsum(rates, axis=1)
        total = csum[:, -1]  # >= a_1 > 0 always
        tn = t + rng.exponential(size=B) / total
        u = rng.random(B)
        pick = (csum < (u * total)[:, None]).sum(axis=1)
        np.minimum(pick, X.shape[1] - 1, out=pick)  # guard the u -> 1 rounding edge
        fire = alive & (tn <= duration)
        rows = np.nonzero(fire)[0]
        X[rows, pick[rows]] += 1
        t = tn
        alive = fire


# CDF tables for the parallel update.  Rows 0..m_cut-1 hold the exact finite
# distributions; row m_cut holds the truncated infinite-gap distribution and
# stands in for every gap >= m_cut.  The substitution error per sampled jump
# is below ~1e-12 in total variation: p_{m,alpha} and p_{inf,alpha} agree on
# the stored support up to O(q^{m - support} / (1 - q)).
_table_cache = {}


def _cdf_table(alpha_eff, q):
    key = (alpha_eff, q)
    hit = _table_cache.get(key)
    if hit is not None:
        return hit
    inf_dist = jump_pmf(math.inf, alpha_eff, q)
    j_inf = inf_dist.support
    pad = int(math.ceil(math.log(1e-14 * (1.0 - q)) / math.log(q)))
    m_cut = j_inf + max(pad, 1)
    width = m_cut + 1
    table = np.ones((m_cut + 1, width))
    for m in range(m_cut):
        cdf = jump_pmf(m, alpha_eff, q).cdf
        table[m, : len(cdf)] = cdf
        table[m, len(cdf) :] = cdf[-1]
    cdf = inf_dist.cdf
    table[m_cut, : len(cdf)] = cdf
    table[m_cut, len(cdf) :] = cdf[-1]
    _table_cache[key] = (table, m_cut)
    return table, m_cut


def _geometric_batch_step(X, alpha_t, params, rng):
    a, q = params.a, params.q
    B, N = X.shape
    u = rng.random((B, N))
    gaps = np.empty((B, N), dtype=np.int64)
    gaps[:, 1:] = X[:, :-1] - X[:, 1:] - 1
    if params.uniform_a:
        table, m_cut = _cdf_table(a[0] * alpha_t, q)
        gaps[:, 0] = m_cut  # gap_1 is infinite
        np.minimum(gaps, m_cut, out=gaps)
        X += (table[gaps] < u[:, :, None]).sum(axis=-1)
        return
    jumps = np.empty((B, N), dtype=np.int64)
    for a_val in np.unique(a):
        cols = np.nonzero(a == a_val)[0]
        table, m_cut = _cdf_table(a_val * alpha_t, q)
        gaps[:, 0] = m_cut  # gap_1 is infinite
        m_eff = np.minimum(gaps[:, cols], m_cut)
        rows = table[m_eff]
        jumps[:, cols] = (rows < u[:, cols, None]).sum(axis=-1)
    X += jumps


def _bernoulli_batch_step(X, beta_t, params, rng):
    a, q = params.a, params.q
    B, N = X.shape
    u = rng.random((B, N))
    prev_jumped = None
    prev_old = None
    for i in range(N):
        p_full = a[i] * beta_t / (1.0 + a[i] * beta_t)
        if i == 0:
            p = p_full
        else:
            gap = prev_old - X[:, i] - 1  # uses pre-update position of particle i-1
            p = np.where(prev_jumped, p_full, (1.0 - q**gap) * p_full)
        jump = u[:, i] < p
        prev_old = X[:, i].copy()
        X[:, i] += jump
        prev_jumped = jump


def _run_stages(X, stages, params, rng):
    geo_idx = 0
    ber_idx = 0
    for kind, extent in stages:
        if kind == "poisson":
            _poisson_batch(X, float(extent), params, rng)
        elif kind == "geometric":
            for _ in range(int(extent)):
                _geometric_batch_step(X, params.alpha_at(geo_idx), params, rng)
                geo_idx += 1
        elif kind == "bernoulli":
            for _ in range(int(extent)):
                _bernoulli_batch_step(X, params.beta_at(ber_idx), params, rng)
                ber_idx += 1
        else:
            raise ValueError(f"unknown stage kind {kind!r}")


def stages_for(flavor, t):
    """Canonical stage list for a flavor; combined takes t = (gamma, t_geo, t_ber)."""
    if flavor == "poisson":
        return [("poisson", t)]
    if flavor == "geometric":
        return [("geometric", t)]
    if flavor == "bernoulli":
        return [("bernoulli", t)]
    if flavor == "combined":
        gamma, t_geo, t_ber = t
        return [("poisson", gamma), ("geometric", t_geo), ("bernoulli", t_ber)]
    raise ValueError(f"unknown flavor {flavor!r}")


# ---------------------------------------------------------------------------
# single-trajectory API (thin wrappers over the batch kernels)


def evolve_poisson(x, duration, params, rng):
    """Run the continuous-time dynamics for ``duration`` from state x."""
    check_ordered(x)
    X = np.array(x, dtype=np.int64)[None, :].copy()
    _poisson_batch(X, duration, params, rng)
    return X[0]


def step_geometric(x, t_index, params, rng):
    """One parallel-update step using alpha_{t_index+1}."""
    check_ordered(x)
    X = np.array(x, dtype=np.int64)[None, :].copy()
    _geometric_batch_step(X, params.alpha_at(t_index), params, rng)
    return X[0]


def step_bernoulli(x, t_index, params, rng):
    """One sequential-update step using beta_{t_index+1}."""
    check_ordered(x)
    X = np.array(x, dtype=np.int64)[None, :].copy()
    _bernoulli_batch_step(X, params.beta_at(t_index), params, rng)
    return X[0]


# ---------------------------------------------------------------------------
# Monte Carlo engine


def _batch_sizes(trials, batch_size):
    full, rest = divmod(trials, batch_size)
    sizes = [batch_size] * full
    if rest:
        sizes.append(rest)
    return sizes


def _batch_rng(master_seed, b):
    return np.random.default_rng(np.random.SeedSequence((int(master_seed), int(b))))


def mc_expectations(
    stages,
    n_list,
    params,
    trials,
    master_seed,
    x0=None,
    workers=1,
    batch_size=DEFAULT_BATCH,
):
    """Monte Carlo means and standard errors of several observables at once.

    All observables in ``n_list`` are evaluated on the same trajectories, so a
    single run serves a whole family of moment checks.  Reruns with the same
    master_seed are bit-identical regardless of ``workers``.
    """
    if trials < 2:
        raise ValueError("trials must be >= 2")
    if x0 is None:
        x0 = step_initial(params.N)
    x0 = np.asarray(x0, dtype=np.int64)
    check_ordered(x0)
    n_arrs = [np.atleast_1d(np.asarray(n, dtype=int)) for n in n_list]
    q = params.q

    def run_batch(args):
        b, size = args
        rng = _batch_rng(master_seed, b)
        X = np.tile(x0, (size, 1))
        _run_stages(X, stages, params, rng)
        sums = np.empty(len(n_arrs))
        sumsq = np.empty(len(n_arrs))
        for j, n in enumerate(n_arrs):
            if np.any(n == 0):
                obs = np.zeros(size)
            else:
                obs = np.prod(q ** (X[:, n - 1] + n).astype(float), axis=1)
            sums[j] = obs.sum()
            sumsq[j] = (obs * obs).sum()
        return sums, sumsq

    jobs = list(enumerate(_batch_sizes(trials, batch_size)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run_batch, jobs))
    else:
        partials = [run_batch(j) for j in jobs]

    # ordered reduction over batch index keeps the result scheduling-independent
    total = np.zeros(len(n_arrs))
    total_sq = np.zeros(len(n_arrs))
    for sums, sumsq in partials:
        total += sums
        total_sq += sumsq
    mean = total / trials
    var = np.maximum(total_sq - trials * mean**2, 0.0) / (trials - 1)
    stderr = np.sqrt(var / trials)
    return mean, stderr


def mc_expectation(flavor, n, t, params, trials, master_seed, x0=None, workers=1):
    """Mean and stderr of prod q^{x_{n_i}(t)+n_i} under one flavor (or combined)."""
    means, errs = mc_expectations(
        stages_for(flavor, t), [n], params, trials, master_seed, x0=x0, workers=workers
    )
    return float(means[0]), float(errs[0])


# ---------------------------------------------------------------------------
# zero-range dual chains on sites 0..N (site 0 absorbing)


def _zr_poisson_batch(Y, duration, params, rng):
    if duration == 0:
        return
    a, q = params.a, params.q
    B = Y.shape[0]
    t = np.zeros(B)
    alive = np.ones(B, dtype=bool)
    while True:
        rates = a * (1.0 - q ** Y[:, 1:])
        csum = np.cumsum(rates, axis=1)
        total = csum[:, -1]
        alive &= total > 0
        if not alive.any():
            break
        with np.errstate(divide="ignore"):
            tn = t + rng.exponential(size=B) / np.where(total > 0, total, np.inf)
        u = rng.random(B)
        pick = (csum < (u * total)[:, None]).sum(axis=1)
        np.minimum(pick, Y.shape[1] - 2, out=pick)
        fire = alive & (tn <= duration)
        rows = np.nonzero(fire)[0]
        Y[rows, pick[rows] + 1] -= 1
        Y[rows, pick[rows]] += 1
        t = np.where(fire, tn, t)
        alive = fire


def _zr_geometric_batch_step(Y, alpha_t, params, rng):
    a, q = params.a, params.q
    B = Y.shape[0]
    N = params.N
    movers = np.zeros((B, N), dtype=np.int64)
    for i in range(1, N + 1):
        y = Y[:, i]
        eff = a[i - 1] * alpha_t
        mv = np.zeros(B, dtype=np.int64)
        top = int(y.max()) if B else 0
        for level in range(top):
            # the particle at height `level` moves with prob eff * q^(# stayers
            # below it); the resulting mover count is p_{y, a alpha} distributed,
            # which is what duality with the particle system demands
            p = eff * q ** (level - mv).astype(float)
            tag = (y > level) & (rng.random(B) < p)
            mv += tag
        movers[:, i - 1] = mv
    Y[:, 1:] -= movers
    Y[:, :-1] += movers


def evolve_zero_range_poisson(y, duration, params, rng):
    """Continuous-time zero-range chain: site i feeds site i-1 at rate a_i(1-q^{y_i})."""
    Y = np.array(y, dtype=np.int64)[None, :].copy()
    if Y.shape[1] != params.N + 1 or np.any(Y < 0):
        raise ValueError(f"occupation vector must have {params.N + 1} nonnegative entries")
    _zr_poisson_batch(Y, duration, params, rng)
    return Y[0]


def step_zero_range_geometric(y, t_index, params, rng):
    """One parallel zero-range step; within a site particles move bottom-up."""
    Y = np.array(y, dtype=np.int64)[None, :].copy()
    if Y.shape[1] != params.N + 1 or np.any(Y < 0):
        raise ValueError(f"occupation vector must have {params.N + 1} nonnegative entries")
    _zr_geometric_batch_step(Y, params.alpha_at(t_index), params, rng)
    return Y[0]


def duality_H(x, y, q):
    """Duality functional H(x; y) = prod_{i>=1} q^{(x_i+i) y_i}, zero when y_0 > 0."""
    x = np.asarray(x, dtype=int)
    y = np.asarray(y, dtype=int)
    if y[0] > 0:
        return 0.0
    idx = np.arange(1, len(x) + 1)
    return float(np.prod(q ** ((x + idx) * y[1:]).astype(float)))


@dataclass(frozen=True)
class DualityResult:
    lhs: float
    rhs: float
    lhs_stderr: float
    rhs_stderr: float

    @property
    def z_score(self):
        se = math.hypot(self.lhs_stderr, self.rhs_stderr)
        gap = abs(self.lhs - self.rhs)
        if se == 0.0:
            return 0.0 if gap == 0.0 else math.inf
        return gap / se


def duality_check(
    x0, y0, t, flavor, params, trials, master_seed, batch_size=DEFAULT_BATCH
):
    """Monte Carlo check of E^x[H(x(t); y0)] = E^y[H(x0; y(t))].

    ``flavor`` is ``poisson`` (t a duration) or ``geometric`` (t a step count).
    """
    if flavor not in ("poisson", "geometric"):
        raise ValueError(f"no zero-range dual implemented for flavor {flavor!r}")
    x0 = np.asarray(x0, dtype=np.int64)
    y0 = np.asarray(y0, dtype=np.int64)
    check_ordered(x0)
    q = params.q
    idx = np.arange(1, params.N + 1)

    def side(tag, evolve_x):
        total = 0.0
        total_sq = 0.0
        for b, size in enumerate(_batch_sizes(trials, batch_size)):
            rng = np.random.default_rng(
                np.random.SeedSequence((int(master_seed), tag, b))
            )
            if evolve_x:
                X = np.tile(x0, (size, 1))
                if flavor == "poisson":
                    _poisson_batch(X, t, params, rng)
                else:
                    for s in range(int(t)):
                        _geometric_batch_step(X, params.alpha_at(s), params, rng)
                if y0[0] > 0:
                    obs = np.zeros(size)
                else:
                    obs = np.prod(q ** ((X + idx) * y0[1:]).astype(float), axis=1)
            else:
                Y = np.tile(y0, (size, 1))
                if flavor == "poisson":
                    _zr_poisson_batch(Y, t, params, rng)
                else:
                    for s in range(int(t)):
                        _zr_geometric_batch_step(Y, params.alpha_at(s), params, rng)
                obs = np.where(Y[:, 0] > 0, 0.0, 1.0) * np.prod(
                    q ** ((x0 + idx) * Y[:, 1:]).astype(float), axis=1
                )
            total += obs.sum()
            total_sq += (obs * obs).sum()
        mean = total / trials
        var = max(total_sq - trials * mean**2, 0.0) / (trials - 1)
        return mean, math.sqrt(var / trials)

    lhs, lse = side(0, evolve_x=True)
    rhs, rse = side(1, evolve_x=False)
    return DualityResult(lhs=lhs, rhs=rhs, lhs_stderr=lse, rhs_stderr=rse)


def trajectory_csv_rows(flavor, t, params, trials, master_seed, x0=None):
    """Rows (trial, time, particle, position) recording each trial's final state.

    Intermediate discrete times are recorded as well for step flavors; the
    Poisson flavor records t only.
    """
    if x0 is None:
        x0 = step_initial(params.N)
    rows = []
    for trial in range(trials):
        rng = _batch_rng(master_seed, trial)
        x = np.array(x0, dtype=np.int64)
        if flavor == "poisson":
            x = evolve_poisson(x, t, params, rng)
            for i, pos in enumerate(x, start=1):
                rows.append((trial, float(t), i, int(pos)))
        else:
            for s in range(int(t)):
                if flavor == "geometric":
                    x = step_geometric(x, s, params, rng)
                elif flavor == "bernoulli":
                    x = step_bernoulli(x, s, params, rng)
                else:
                    raise ValueError(f"unknown flavor {flavor!r}")
                for i, pos in enumerate(x, start=1):
                    rows.append((trial, float(s + 1), i, int(pos)))
    return rows

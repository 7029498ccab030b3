"""q-TASEP: simulators and exact solvers for three integrable particle systems.

The package computes the same observables E[prod_i q^{x_{n_i}(t)+n_i}] four
independent ways and cross-checks them:

* :mod:`qtasep.simulate` runs the Poisson, geometric and Bernoulli dynamics
  (plus their zero-range duals) with a reproducible Monte Carlo engine;
* :mod:`qtasep.evolution` solves the closed triangular moment systems exactly;
* :mod:`qtasep.moments` evaluates the nested contour integral formulas;
* :mod:`qtasep.fredholm` evaluates Fredholm determinants of the q-Laplace
  transform and inverts it back to particle-position distributions.

:mod:`qtasep.qfunctions` supplies the q-deformed special functions everything
else is built from, and :mod:`qtasep.verify` bundles the cross-method checks
behind the ``qtasep verify`` command line.
"""

from .qfunctions import (
    ConvergenceError,
    JumpDistribution,
    cluster_coeff,
    elementary_sym_q,
    jump_pmf,
    jump_sample,
    q_binomial,
    qpoch,
    qpoch_inf,
    validate_q,
)
from .simulate import (
    ProcessParams,
    duality_check,
    evolve_poisson,
    evolve_zero_range_poisson,
    mc_expectation,
    mc_expectations,
    observable_q,
    step_bernoulli,
    step_geometric,
    step_initial,
    step_zero_range_geometric,
)
from .evolution import (
    build_lattice,
    enumerate_Yk,
    n_to_y,
    run_true,
    solve_poisson_true,
    step_bernoulli_true,
    step_geometric_true,
    step_init_data,
    y_to_n,
)
from .moments import (
    ContourError,
    ContourFamily,
    MomentSpec,
    default_contours,
    f_ratio,
    free_equation_residual,
    boundary_residual,
    moment_k1_residues,
    nested_moment,
    nested_moments,
    verify_commutation,
    verify_moment_equality,
)
from .fredholm import (
    invert_q_laplace,
    pmf_from_moments,
    q_laplace_cauchy,
    q_laplace_direct,
    q_laplace_mb,
)

__version__ = "0.1.0"

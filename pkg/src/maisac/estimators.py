"""Estimator-style wrappers around the three optimization methods.

Each estimator takes its hyperparameters in ``__init__`` and is fitted to one
``(Scenario, ScenarioConfig)`` pair.  There is no ``predict`` or ``transform``:
the fitted antenna layout and beamformers are the result, and ``score``
evaluates the weighted objective they achieve.
"""

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .channel import build_channels
from .fp_solver import SolverOptions
from .metrics import objective_parts
from .position import CfgsOptions, cfgs_optimize, fpa_solve, ga_ma_optimize
from .scenario import Scenario, ScenarioConfig


def _check_inputs(scenario, config):
    if not isinstance(scenario, Scenario):
        raise TypeError(f"expected a Scenario, got {type(scenario).__name__}")
    if not isinstance(config, ScenarioConfig):
        raise TypeError(f"expected a ScenarioConfig, got {type(config).__name__}")
    if (scenario.n_users, scenario.n_clutters) != (config.n_users, config.n_clutters):
        raise ValueError("scenario and config disagree on the number of users or clutters")


class _IsacEstimator(BaseEstimator):
    def _solver_options(self):
        return SolverOptions(max_outer=self.max_outer, obj_tol=self.obj_tol,
                             power_tol=self.power_tol)

    def _solve(self, scenario, config):
        raise NotImplementedError

    def fit(self, scenario, config):
        """Optimize for ``scenario`` under ``config`` and store the solution."""
        _check_inputs(scenario, config)
        sol = self._solve(scenario, config)
        ch = build_channels(sol.layout, scenario, config)
        value, comm, sens = objective_parts(ch, sol.bf, config)
        self.solution_ = sol
        self.layout_ = sol.layout
        self.precoder_ = sol.bf.precoder
        self.combiner_ = sol.bf.combiner
        self.objective_ = value
        self.comm_sum_rate_ = comm
        self.sensing_mi_ = sens
        self.converged_ = sol.converged
        self.trace_ = sol.trace
        return self

    def score(self, scenario, config):
        """Objective of the fitted layout and beamformers on ``scenario``."""
        check_is_fitted(self, "solution_")
        _check_inputs(scenario, config)
        ch = build_channels(self.layout_, scenario, config)
        return objective_parts(ch, self.solution_.bf, config)[0]


class FixedArrayBeamformer(_IsacEstimator):
    """Beamforming only, with half-wavelength arrays at the lower range bounds."""

    def __init__(self, max_outer=200, obj_tol=1e-6, power_tol=1e-10):
        self.max_outer = max_outer
        self.obj_tol = obj_tol
        self.power_tol = power_tol

    def _solve(self, scenario, config):
        return fpa_solve(scenario, config, self._solver_options())


class GradientAscentMA(_IsacEstimator):
    """Projected gradient ascent on antenna positions from a random feasible layout."""

    def __init__(self, step_size=None, step_shrink=0.5, max_position_iters=30, inner_steps=10,
                 grad_mode="analytic", tol=1e-4, max_outer=200, obj_tol=1e-6, power_tol=1e-10):
        self.step_size = step_size
        self.step_shrink = step_shrink
        self.max_position_iters = max_position_iters
        self.inner_steps = inner_steps
        self.grad_mode = grad_mode
        self.tol = tol
        self.max_outer = max_outer
        self.obj_tol = obj_tol
        self.power_tol = power_tol

    def _position_options(self, **extra):
        return CfgsOptions(step_size=self.step_size, step_shrink=self.step_shrink,
                           max_position_iters=self.max_position_iters,
                           inner_steps=self.inner_steps, grad_mode=self.grad_mode,
                           tol=self.tol, **extra)

    def _solve(self, scenario, config):
        return ga_ma_optimize(scenario, config, self._position_options(), self._solver_options())


class CFGSOptimizer(GradientAscentMA):
    """Coarse grid search over placements, then the gradient fine phase."""

    def __init__(self, combo_cap=2000, coarse_inner_iters=5, grid_interval=None, step_size=None,
                 step_shrink=0.5, max_position_iters=30, inner_steps=10, grad_mode="analytic",
                 tol=1e-4, max_outer=200, obj_tol=1e-6, power_tol=1e-10):
        super().__init__(step_size=step_size, step_shrink=step_shrink,
                         max_position_iters=max_position_iters, inner_steps=inner_steps,
                         grad_mode=grad_mode, tol=tol, max_outer=max_outer, obj_tol=obj_tol,
                         power_tol=power_tol)
        self.combo_cap = combo_cap
        self.coarse_inner_iters = coarse_inner_iters
        self.grid_interval = grid_interval

    def _solve(self, scenario, config):
        opts = self._position_options(combo_cap=self.combo_cap,
                                      coarse_inner_iters=self.coarse_inner_iters,
                                      grid_interval=self.grid_interval)
        return cfgs_optimize(scenario, config, opts, self._solver_options())


METHODS = {
    "fpa": FixedArrayBeamformer,
    "gama": GradientAscentMA,
    "cfgs": CFGSOptimizer,
}

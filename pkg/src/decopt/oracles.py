"""Per-agent first-order data oracles.

The oracle is the one place where the 1/n scaling of the stacked gradient is
applied: every algorithm consumes the scaled stack.  Each agent owns an
independent random stream (spawned from one seed), so streaming draws are
reproducible regardless of evaluation order across agents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MODES = ("batch", "streaming", "minibatch")


@dataclass(frozen=True)
class OracleSpec:
    mode: str = "batch"
    batch_size: int = 1          # m_t, used by streaming/minibatch
    sigma: float = 0.0           # streaming noise scale; variance-bound metadata

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown oracle mode {self.mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def stochastic(self) -> bool:
        return self.mode != "batch"


@dataclass
class GradientEstimate:
    """1/n-scaled per-agent gradient stack plus the per-sample evaluations charged."""

    stack: np.ndarray
    cost: int


class Oracle:
    """Gradient source for one run.

    batch      exact local gradients; cost = sum_i M_i per call
    minibatch  uniform-with-replacement sample mean over the fixed local set
               (m = M_i uses the full set exactly); cost = n*m
    streaming  exact gradient plus i.i.d. zero-mean Gaussian noise with
               per-agent covariance (sigma^2/m) I; cost = n*m
    """

    def __init__(self, problem, spec: OracleSpec, seed=None):
        self.problem = problem
        self.spec = spec
        if spec.mode == "minibatch":
            too_small = spec.batch_size > problem.sizes.min()
            if too_small:
                raise ValueError(
                    f"batch_size {spec.batch_size} exceeds the smallest local "
                    f"dataset ({int(problem.sizes.min())})")
        ss = seed if isinstance(seed, np.random.SeedSequence) \
            else np.random.SeedSequence(seed)
        self._streams = [np.random.default_rng(s) for s in ss.spawn(problem.n)]

    def evaluate(self, theta_stack, counters=None) -> GradientEstimate:
        p, spec = self.problem, self.spec
        theta_stack = np.asarray(theta_stack, dtype=float)
        if spec.mode == "batch":
            stack = p.grad_stack(theta_stack) / p.n
            cost = p.total_samples
        elif spec.mode == "streaming":
            stack = p.grad_stack(theta_stack)
            if spec.sigma > 0.0:
                scale = spec.sigma / np.sqrt(spec.batch_size)
                noise = np.stack([self._streams[i].normal(size=p.d)
                                  for i in range(p.n)])
                stack = stack + scale * noise
            stack = stack / p.n
            cost = p.n * spec.batch_size
        else:  # minibatch
            m = spec.batch_size
            rows = []
            for i in range(p.n):
                if m == p.sizes[i]:
                    idx = np.arange(m)
                else:
                    idx = self._streams[i].integers(0, p.sizes[i], size=m)
                rows.append(p.minibatch_grad(i, theta_stack[i], idx))
            stack = np.stack(rows) / p.n
            cost = p.n * m
        if counters is not None:
            counters.grad_eval_rounds += 1
            counters.sample_grad_evals += cost
        return GradientEstimate(stack=stack, cost=cost)


@dataclass
class OracleCheckReport:
    passed: bool
    max_violation: float         # worst |mean dev| / bound over components
    mean_deviation: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)


def unbiasedness_check(problem, spec: OracleSpec, theta_stack, n_trials: int,
                       seed=0, oracle: Oracle | None = None) -> OracleCheckReport:
    """Empirical-mean test of E[DO_i] = (1/n) grad f_i, componentwise.

    Passes when every component deviates from the exact scaled gradient by at
    most 4 * (empirical std) / sqrt(n_trials).
    """
    oracle = oracle or Oracle(problem, spec, seed=seed)
    theta_stack = np.asarray(theta_stack, dtype=float)
    exact = problem.grad_stack(theta_stack) / problem.n
    acc = np.zeros_like(exact)
    acc2 = np.zeros_like(exact)
    for _ in range(n_trials):
        s = oracle.evaluate(theta_stack).stack
        acc += s
        acc2 += s * s
    mean = acc / n_trials
    var = np.maximum(acc2 / n_trials - mean ** 2, 0.0)
    bound = 4.0 * np.sqrt(var / n_trials)
    dev = np.abs(mean - exact)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, dev / bound, np.where(dev > 0, np.inf, 0.0))
    return OracleCheckReport(passed=bool(np.all(dev <= bound)),
                             max_violation=float(ratio.max()),
                             mean_deviation=dev, bound=bound)


def empirical_variance_trace(problem, spec: OracleSpec, theta_stack,
                             n_trials: int, seed=0) -> float:
    """Trace of the empirical covariance of the stacked estimate."""
    oracle = Oracle(problem, spec, seed=seed)
    theta_stack = np.asarray(theta_stack, dtype=float)
    acc = np.zeros((problem.n, problem.d))
    acc2 = np.zeros_like(acc)
    for _ in range(n_trials):
        s = oracle.evaluate(theta_stack).stack
        acc += s
        acc2 += s * s
    mean = acc / n_trials
    return float(np.sum(acc2 / n_trials - mean ** 2))


def variance_halving_check(problem, spec: OracleSpec, theta_stack,
                           n_trials: int = 10_000, seed=0,
                           rel_tol: float = 0.2) -> tuple[bool, float]:
    """Doubling the batch size should halve the covariance trace (within
    rel_tol).  Returns (passed, trace_ratio)."""
    base = empirical_variance_trace(problem, spec, theta_stack, n_trials, seed)
    doubled_spec = OracleSpec(mode=spec.mode, batch_size=2 * spec.batch_size,
                              sigma=spec.sigma)
    doubled = empirical_variance_trace(problem, doubled_spec, theta_stack,
                                       n_trials, seed + 1)
    ratio = base / doubled
    return bool(abs(ratio - 2.0) <= 2.0 * rel_tol), float(ratio)

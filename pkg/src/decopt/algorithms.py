"""Decentralized first-order algorithms behind one synchronous stepper interface.

Every stepper advances one outer iteration and charges counters exactly:
DGD, DSGD, Prox-GPDA, EXTRA and D2 cost one communication round per
iteration, GT and GNSD two, xFILTER exactly its Chebyshev order Q; every
algorithm costs one gradient-evaluation round per iteration.  Initialization
costs (e.g. EXTRA's bootstrap step, Prox-GPDA's first neighbor exchange) are
charged by the init functions and show up in the t=0/t=1 record row.

Displayed recursions are applied columnwise for d > 1: mixing acts on the
agent axis, gradients on the coordinate axis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .chebyshev import chebyshev_solve
from .metrics import Counters, STATUS_DIVERGED, STATUS_RUNNING
from .oracles import Oracle, OracleSpec
from .problems import generate_synthetic
from .topology import Graph, MixingMatrix, Topology, explicit_mixing, \
    max_degree_mixing, mix

ALGORITHM_IDS = ("dgd", "prox_gpda", "extra", "gt", "xfilter", "dsgd", "d2", "gnsd")

D2_LAMBDA_MIN = -1.0 / 3.0


class ConfigError(ValueError):
    """Algorithm/experiment configuration fails validation."""


# ---------------------------------------------------------------------------
# step sizes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepSize:
    """constant(alpha) | one_over_t(c) with alpha_t = c/(t+1) |
    horizon(kappa, n, sigma, T) with the constant kappa*sqrt(n/(sigma^2 T))."""

    kind: str
    value: float

    @classmethod
    def constant(cls, alpha: float) -> "StepSize":
        if alpha <= 0:
            raise ConfigError("step size must be positive")
        return cls("constant", float(alpha))

    @classmethod
    def one_over_t(cls, c: float = 1.0) -> "StepSize":
        if c <= 0:
            raise ConfigError("step size numerator must be positive")
        return cls("one_over_t", float(c))

    @classmethod
    def horizon(cls, n: int, sigma: float, horizon_iters: int,
                kappa: float = 1.0) -> "StepSize":
        if sigma <= 0:
            raise ConfigError("horizon schedule needs sigma > 0")
        if horizon_iters < 1 or kappa <= 0:
            raise ConfigError("horizon schedule needs positive kappa and T")
        return cls("horizon", float(kappa * math.sqrt(n / (sigma ** 2 * horizon_iters))))

    def at(self, t: int) -> float:
        if self.kind == "one_over_t":
            return self.value / (t + 1)
        return self.value


# ---------------------------------------------------------------------------
# configuration and state
# ---------------------------------------------------------------------------

@dataclass
class AlgoConfig:
    algorithm: str
    stepsize: StepSize | None = None
    c: float | None = None                     # primal-dual penalty
    beta: float | np.ndarray | None = None     # proximal weights (scalar or per node)
    cheby_order: int | None = None             # xFILTER inner order Q
    force: bool = False                        # override D2's spectrum precondition
    gt_mixing: MixingMatrix | None = None      # optional separate GT mixing matrix
    extra_w_tilde: np.ndarray | None = None    # generalized EXTRA second matrix
    mu0: np.ndarray | None = None              # initial dual (Prox-GPDA / xFILTER)

    def beta_vec(self, n: int) -> np.ndarray:
        b = np.asarray(self.beta, dtype=float)
        return np.full(n, float(b)) if b.ndim == 0 else b

    def resolved_q(self, topo: Topology) -> int:
        # Q ~ 1/sqrt(spectral ratio of the Laplacian) reproduces the
        # near-optimal communication budget per outer iteration
        return self.cheby_order if self.cheby_order is not None \
            else int(math.ceil(1.0 / math.sqrt(topo.xi)))

    def validate(self, topo: Topology):
        if self.algorithm not in ALGORITHM_IDS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm in ("prox_gpda", "xfilter"):
            if self.c is None or self.c <= 0:
                raise ConfigError(f"{self.algorithm} needs penalty c > 0")
            if self.beta is None:
                raise ConfigError(f"{self.algorithm} needs proximal weights beta")
            beta = self.beta_vec(topo.n)
            if self.algorithm == "prox_gpda":
                if np.any(beta + 2.0 * self.c * topo.degrees <= 0):
                    raise ConfigError("prox_gpda requires beta_i + 2 c d_i > 0")
            elif np.any(beta <= 0):
                raise ConfigError("xfilter requires beta_i > 0")
            if self.algorithm == "xfilter" and self.resolved_q(topo) < 1:
                raise ConfigError("xfilter needs Chebyshev order >= 1")
        else:
            if self.stepsize is None:
                raise ConfigError(f"{self.algorithm} needs a step size schedule")
        if self.algorithm == "d2" and not self.force:
            if topo.w.lambda_min <= D2_LAMBDA_MIN + 1e-12:
                raise ConfigError(
                    f"d2 requires lambda_min(W) > -1/3, got {topo.w.lambda_min:.6g} "
                    "(pass force=True to run anyway)")


@dataclass
class AlgoState:
    """Per-run iterate memory; counters are cumulative and nondecreasing."""

    theta: np.ndarray
    t: int = 0
    counters: Counters = field(default_factory=Counters)
    status: str = STATUS_RUNNING
    theta_prev: np.ndarray | None = None
    do_prev: np.ndarray | None = None      # stored oracle realization (not re-drawn)
    g: np.ndarray | None = None            # gradient tracker
    mu: np.ndarray | None = None           # edge duals, |E| x d
    p: np.ndarray | None = None            # node duals A^T mu, n x d
    adj_cache: np.ndarray | None = None    # last exchanged neighbor sums
    lap_c_cache: np.ndarray | None = None  # c * L @ theta from the last exchange
    warn_flags: set = field(default_factory=set)

    def _diverged(self):
        self.status = STATUS_DIVERGED
        return self


def _finite(*arrays) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)


def _state(theta0) -> AlgoState:
    return AlgoState(theta=np.array(theta0, dtype=float, copy=True))


# ---------------------------------------------------------------------------
# DGD / DSGD
# ---------------------------------------------------------------------------

def init_dgd(theta0, oracle, topo, cfg):
    return _state(theta0)


def step_dgd(state, oracle, topo, cfg):
    """theta_{t+1} = W theta_t - alpha_t DO(theta_t)."""
    do = oracle.evaluate(state.theta, state.counters)
    new = topo.mix(state.theta, state.counters) - cfg.stepsize.at(state.t) * do.stack
    if not _finite(new):
        return state._diverged()
    state.theta = new
    state.t += 1
    return state


# DSGD is DGD driven by a stochastic oracle
init_dsgd, step_dsgd = init_dgd, step_dgd


# ---------------------------------------------------------------------------
# Prox-GPDA
# ---------------------------------------------------------------------------

def init_prox_gpda(theta0, oracle, topo, cfg):
    state = _state(theta0)
    state.mu = np.zeros((topo.n_edges, state.theta.shape[1])) \
        if cfg.mu0 is None else np.array(cfg.mu0, dtype=float, copy=True)
    state.p = topo.incidence.T @ state.mu
    # the current iterate's neighbor sums are exchanged once and reused
    state.adj_cache = topo.neighbor_sum(state.theta, state.counters)
    return state


def step_prox_gpda(state, oracle, topo, cfg):
    """Per-agent proximal-linearized primal step followed by dual ascent:

    theta_i <- (beta_i theta_i - DO_i - p_i + c sum_{j ~ i}(theta_i + theta_j))
               / (beta_i + 2 c d_i),   then p <- p + c L theta_new.
    """
    beta = cfg.beta_vec(topo.n)[:, None]
    deg = topo.degrees[:, None]
    do = oracle.evaluate(state.theta, state.counters)
    num = beta * state.theta - do.stack - state.p \
        + cfg.c * (deg * state.theta + state.adj_cache)
    new = num / (beta + 2.0 * cfg.c * deg)
    if not _finite(new):
        return state._diverged()
    adj_new = topo.neighbor_sum(new, state.counters)
    state.p = state.p + cfg.c * (deg * new - adj_new)
    state.mu = state.mu + cfg.c * (topo.incidence @ new)  # same exchanged values
    state.adj_cache = adj_new
    state.theta = new
    state.t += 1
    return state


# ---------------------------------------------------------------------------
# EXTRA
# ---------------------------------------------------------------------------

def init_extra(theta0, oracle, topo, cfg):
    state = _state(theta0)
    do0 = oracle.evaluate(state.theta, state.counters)
    theta1 = topo.mix(state.theta, state.counters) - cfg.stepsize.at(0) * do0.stack
    state.theta_prev = state.theta
    state.do_prev = do0.stack
    if not _finite(theta1):
        return state._diverged()
    state.theta = theta1
    state.t = 1
    return state


def step_extra(state, oracle, topo, cfg):
    """theta_{t+1} = (I+W) theta_t - (I+W)/2 theta_{t-1}
                     - alpha (DO(theta_t) - DO(theta_{t-1}))."""
    do_t = oracle.evaluate(state.theta, state.counters)
    alpha = cfg.stepsize.at(state.t)
    if cfg.extra_w_tilde is None:
        mid = state.theta - 0.5 * state.theta_prev
        new = mid + topo.mix(mid, state.counters) \
            - alpha * (do_t.stack - state.do_prev)
    else:
        # generalized second matrix shares the graph sparsity, so both
        # combinations use the one exchanged set of neighbor values
        new = state.theta + topo.mix(state.theta, state.counters) \
            - cfg.extra_w_tilde @ state.theta_prev \
            - alpha * (do_t.stack - state.do_prev)
    if not _finite(new):
        return state._diverged()
    state.theta_prev = state.theta
    state.do_prev = do_t.stack
    state.theta = new
    state.t += 1
    return state


# ---------------------------------------------------------------------------
# gradient tracking (GT deterministic, GNSD stochastic)
# ---------------------------------------------------------------------------

def _init_tracking(theta0, oracle, topo, cfg):
    state = _state(theta0)
    do0 = oracle.evaluate(state.theta, state.counters)
    state.g = do0.stack.copy()     # makes 1^T g = 1^T DO hold from t = 0
    state.do_prev = do0.stack
    return state


def _step_tracking(state, oracle, topo, cfg, hat_w):
    """theta_{t+1} = W theta_t - alpha_t g_t;
    g_{t+1} = W g_t + DO(theta_{t+1}) - DO(theta_t)."""
    new = mix(hat_w, state.theta, state.counters) - cfg.stepsize.at(state.t) * state.g
    if not _finite(new):
        return state._diverged()
    do_new = oracle.evaluate(new, state.counters)
    g_new = mix(hat_w, state.g, state.counters) + do_new.stack - state.do_prev
    if not _finite(g_new):
        return state._diverged()
    state.theta = new
    state.g = g_new
    state.do_prev = do_new.stack
    state.t += 1
    return state


init_gt = init_gnsd = _init_tracking


def step_gt(state, oracle, topo, cfg):
    return _step_tracking(state, oracle, topo, cfg,
                          cfg.gt_mixing if cfg.gt_mixing is not None else topo.w)


def step_gnsd(state, oracle, topo, cfg):
    return _step_tracking(state, oracle, topo, cfg, topo.w)


# ---------------------------------------------------------------------------
# D2
# ---------------------------------------------------------------------------

def init_d2(theta0, oracle, topo, cfg):
    cfg.validate(topo)
    state = _state(theta0)
    # bootstrap with one DSGD step, mirroring EXTRA's initialization
    do0 = oracle.evaluate(state.theta, state.counters)
    theta1 = topo.mix(state.theta, state.counters) - cfg.stepsize.at(0) * do0.stack
    state.theta_prev = state.theta
    state.do_prev = do0.stack
    if not _finite(theta1):
        return state._diverged()
    state.theta = theta1
    state.t = 1
    return state


def step_d2(state, oracle, topo, cfg):
    """theta_{t+1} = W (2 theta_t - theta_{t-1}
                        - alpha_t (DO(theta_t) - DO(theta_{t-1}))).

    DO(theta_{t-1}) is the stored realization from the previous step: the
    same sample, never re-drawn.
    """
    do_t = oracle.evaluate(state.theta, state.counters)
    alpha = cfg.stepsize.at(state.t)
    v = 2.0 * state.theta - state.theta_prev - alpha * (do_t.stack - state.do_prev)
    new = topo.mix(v, state.counters)
    if not _finite(new):
        return state._diverged()
    state.theta_prev = state.theta
    state.do_prev = do_t.stack
    state.theta = new
    state.t += 1
    return state


# ---------------------------------------------------------------------------
# xFILTER
# ---------------------------------------------------------------------------

def init_xfilter(theta0, oracle, topo, cfg):
    state = _state(theta0)
    d = state.theta.shape[1]
    state.mu = np.zeros((topo.n_edges, d)) if cfg.mu0 is None \
        else np.array(cfg.mu0, dtype=float, copy=True)
    state.p = topo.incidence.T @ state.mu
    state.lap_c_cache = cfg.c * topo.lap_apply(state.theta, state.counters)
    return state


def step_xfilter(state, oracle, topo, cfg):
    """One proximal primal-dual outer iteration whose primal subproblem

        (c L + Upsilon) theta = Upsilon theta_t - DO(theta_t) - p_t

    is solved approximately by Q Chebyshev rounds over K = c L + Upsilon
    (one exchange per round), followed by the dual ascent mu += c A theta.
    """
    beta = cfg.beta_vec(topo.n)[:, None]
    q = cfg.resolved_q(topo)
    do = oracle.evaluate(state.theta, state.counters)
    b = beta * state.theta - do.stack - state.p
    r0 = -do.stack - state.p - state.lap_c_cache   # b - K theta_t, from cache
    lam_min = float(beta.min())
    lam_max = cfg.c * topo.lap_lambda_max + float(beta.max())

    def apply_k(v):
        return cfg.c * topo.lap_apply(v, state.counters) + beta * v

    res = chebyshev_solve(apply_k, b, state.theta, q, lam_min, lam_max, r0=r0)
    if not res.contracted and "cheby_no_contraction" not in state.warn_flags:
        state.warn_flags.add("cheby_no_contraction")
        warnings.warn(f"xfilter inner solve did not contract at Q={q}; "
                      "increase cheby_order")
    new = res.x
    if not _finite(new):
        return state._diverged()
    # K(dx) was accumulated during the solve, so c L theta_new is known
    # without a further exchange
    lap_new = state.lap_c_cache + (res.k_dx - beta * (new - state.theta))
    state.p = state.p + lap_new
    state.mu = state.mu + cfg.c * (topo.incidence @ new)
    state.lap_c_cache = lap_new
    state.theta = new
    state.t += 1
    return state


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Algorithm:
    name: str
    init: callable
    step: callable
    comm_per_iter: callable       # cfg, topo -> rounds charged by one step
    stochastic: bool = False      # designed for a stochastic oracle


def _one(cfg, topo):
    return 1


def _two(cfg, topo):
    return 2


def _q(cfg, topo):
    return cfg.resolved_q(topo)


ALGORITHMS = {
    "dgd": Algorithm("dgd", init_dgd, step_dgd, _one),
    "prox_gpda": Algorithm("prox_gpda", init_prox_gpda, step_prox_gpda, _one),
    "extra": Algorithm("extra", init_extra, step_extra, _one),
    "gt": Algorithm("gt", init_gt, step_gt, _two),
    "xfilter": Algorithm("xfilter", init_xfilter, step_xfilter, _q),
    "dsgd": Algorithm("dsgd", init_dsgd, step_dsgd, _one, stochastic=True),
    "d2": Algorithm("d2", init_d2, step_d2, _one, stochastic=True),
    "gnsd": Algorithm("gnsd", init_gnsd, step_gnsd, _two, stochastic=True),
}


def run_trajectory(algo_id, problem, topo, cfg, oracle, theta0, iters):
    """Drive init+step and return [theta^0, theta^1, ...] up to iteration `iters`."""
    algo = ALGORITHMS[algo_id]
    traj = [np.array(theta0, dtype=float, copy=True)]
    state = algo.init(theta0, oracle, topo, cfg)
    if state.t == 1:
        traj.append(state.theta.copy())
    while state.t < iters and state.status == STATUS_RUNNING:
        state = algo.step(state, oracle, topo, cfg)
        if state.status != STATUS_RUNNING:
            break
        traj.append(state.theta.copy())
    return traj, state


# ---------------------------------------------------------------------------
# algebraic-equivalence verification
# ---------------------------------------------------------------------------

def prox_gpda_one_line(problem, topo, c, beta, theta0, iters, mu0=None):
    """Single-recursion rewrite of Prox-GPDA, used as an independent oracle:

    theta_{t+1} = (I - c (Ups + 2cD)^{-1} L)(2 theta_t - theta_{t-1})
                  - (Ups + 2cD)^{-1} (DO(theta_t) - DO(theta_{t-1}))
    seeded by the first proximal step from theta_0.
    """
    n = topo.n
    denom = (np.asarray(beta, dtype=float) * np.ones(n)
             + 2.0 * c * topo.degrees)[:, None]
    lap = topo.laplacian
    mmat = np.eye(n) - c * (lap / denom)

    def grad(th):
        return problem.grad_stack(th) / n

    theta0 = np.array(theta0, dtype=float)
    p0 = np.zeros_like(theta0) if mu0 is None else topo.incidence.T @ np.asarray(mu0)
    theta1 = theta0 - (grad(theta0) + p0 + c * (lap @ theta0)) / denom
    traj = [theta0, theta1]
    for _ in range(1, iters):
        t_cur, t_prev = traj[-1], traj[-2]
        traj.append(mmat @ (2.0 * t_cur - t_prev)
                    - (grad(t_cur) - grad(t_prev)) / denom)
    return traj


def gt_one_line(problem, topo, alpha, theta0, iters, hat_w=None):
    """Single-recursion rewrite of gradient tracking:

    theta_{t+1} = 2 W theta_t - W^2 theta_{t-1}
                  - alpha (DO(theta_t) - DO(theta_{t-1}))
    seeded by theta_1 = W theta_0 - alpha DO(theta_0).
    """
    w = (hat_w.entries if hat_w is not None else topo.w.entries)
    w2 = w @ w

    def grad(th):
        return problem.grad_stack(th) / topo.n

    theta0 = np.array(theta0, dtype=float)
    traj = [theta0, w @ theta0 - alpha * grad(theta0)]
    for _ in range(1, iters):
        t_cur, t_prev = traj[-1], traj[-2]
        traj.append(2.0 * (w @ t_cur) - w2 @ t_prev
                    - alpha * (grad(t_cur) - grad(t_prev)))
    return traj


def _max_traj_dev(a, b):
    steps = min(len(a), len(b))
    return max(float(np.max(np.abs(a[t] - b[t]))) for t in range(steps))


@dataclass(frozen=True)
class EquivalenceReport:
    deviations: dict
    tol: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.deviations.values())


def equivalence_instance(seed=0):
    """Random convex quadratic on a path-plus-chord graph (n=8, d=3)."""
    edges = tuple((i, i + 1) for i in range(7)) + ((0, 4),)
    graph = Graph(n=8, edges=edges, kind="custom")
    topo = Topology(graph, max_degree_mixing(graph))
    problem = generate_synthetic("quadratic", n=8, d=3, m_per_agent=1, seed=seed)
    theta0 = np.random.default_rng(seed + 1).normal(size=(8, 3))
    return problem, topo, theta0


def verify_equivalences(seed=0, iters=50, tol=1e-10) -> EquivalenceReport:
    """Check three exact algebraic identities on a random quadratic instance:

    (a) Prox-GPDA primal-dual form vs its one-line rewrite;
    (b) EXTRA with W = I - 2 c a L vs Prox-GPDA with Ups + 2cD = I/a and
        mu_0 = c A theta_0;
    (c) GT's two-variable form vs its one-line rewrite.
    """
    problem, topo, theta0 = equivalence_instance(seed)
    oracle = Oracle(problem, OracleSpec(mode="batch"))
    devs = {}

    # (a)
    cfg = AlgoConfig("prox_gpda", c=0.6, beta=1.2)
    pd_traj, _ = run_trajectory("prox_gpda", problem, topo, cfg, oracle,
                                theta0, iters)
    ol_traj = prox_gpda_one_line(problem, topo, 0.6, 1.2, theta0, iters)
    devs["prox_gpda_vs_one_line"] = _max_traj_dev(pd_traj, ol_traj)

    # (b)
    alpha, c = 0.1, 0.5
    w_extra = explicit_mixing(topo.graph,
                              np.eye(topo.n) - 2.0 * c * alpha * topo.laplacian)
    topo_extra = Topology(topo.graph, w_extra)
    extra_traj, _ = run_trajectory(
        "extra", problem, topo_extra,
        AlgoConfig("extra", stepsize=StepSize.constant(alpha)),
        oracle, theta0, iters)
    beta_sub = 1.0 / alpha - 2.0 * c * topo.degrees
    mu0 = c * (topo.incidence @ np.asarray(theta0, dtype=float))
    prox_traj, _ = run_trajectory(
        "prox_gpda", problem, topo,
        AlgoConfig("prox_gpda", c=c, beta=beta_sub, mu0=mu0),
        oracle, theta0, iters)
    devs["extra_vs_prox_gpda"] = _max_traj_dev(extra_traj, prox_traj)

    # (c)
    gt_traj, _ = run_trajectory(
        "gt", problem, topo, AlgoConfig("gt", stepsize=StepSize.constant(alpha)),
        oracle, theta0, iters)
    gt_ol = gt_one_line(problem, topo, alpha, theta0, iters)
    devs["gt_vs_one_line"] = _max_traj_dev(gt_traj, gt_ol)

    return EquivalenceReport(deviations=devs, tol=tol)

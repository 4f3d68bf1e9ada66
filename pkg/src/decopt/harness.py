"""Config-driven experiment runner, sweeps and verification suites.

A JSON config (one experiment per file) fully determines a run: the master
seed is split into independent streams for problem generation, graph
generation, the initial stack and the oracle, so (config, seed) always
reproduces byte-identical CSV output.  Replicate r runs with seed + r.
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .algorithms import ALGORITHMS, AlgoConfig, ConfigError, StepSize, \
    verify_equivalences
from .metrics import STATUS_RUNNING, record, stationarity_gap, write_records
from .oracles import Oracle, OracleSpec, unbiasedness_check, \
    variance_halving_check
from .problems import Problem, QuadraticProblem, averaging_pair_mixing, \
    estimate_stack_lipschitz, finite_difference_check, generate_synthetic, \
    line3_counterexample, load_dataset_csv, opposing_quadratic_pair
from .topology import Graph, Topology, build_graph, explicit_mixing, \
    max_degree_mixing

ENV_OUT = "DECOPT_OUT"

SWEEP_AXES = ("algorithm", "graph", "batch_size", "n", "heterogeneity")
VERIFY_SUITES = ("equivalence", "counterexamples", "gradients", "oracles",
                 "mixing", "all")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_SUITE = 4


# ---------------------------------------------------------------------------
# config -> objects
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})")
    return cfg


def _require(cfg, key, what):
    if key not in cfg:
        raise ConfigError(f"{what} config is missing {key!r}")
    return cfg[key]


def build_problem(cfg: dict, seed) -> Problem:
    family = _require(cfg, "family", "problem")
    if family == "ncvx_logistic" and "csv" in cfg:
        try:
            return load_dataset_csv(cfg["csv"], lam=cfg.get("lam", 0.01),
                                    rho=cfg.get("rho", 1.0))
        except (OSError, ValueError) as e:
            raise ConfigError(f"dataset {cfg['csv']}: {e}")
    if family == "quadratic" and "a" in cfg:
        b = np.asarray(cfg["b"], dtype=float)
        return QuadraticProblem(a=cfg["a"], b_samples=b)
    n = int(_require(cfg, "n", "problem"))
    d = int(cfg.get("d", 10))
    m = int(cfg.get("M", 400))
    return generate_synthetic(
        family, n=n, d=d, m_per_agent=m,
        seed=cfg.get("seed", seed),
        heterogeneity=cfg.get("heterogeneity"),
        lam=cfg.get("lam", 0.01), rho=cfg.get("rho", 1.0),
        widths=cfg.get("widths"))


def build_topology(cfg: dict, n: int, seed) -> Topology:
    kind = cfg.get("type", "complete")
    if kind == "custom":
        graph = Graph(n=int(cfg.get("n", n)),
                      edges=tuple(tuple(e) for e in _require(cfg, "edges", "graph")))
    else:
        graph = build_graph(kind, int(cfg.get("n", n)),
                            degree=cfg.get("degree"),
                            seed=cfg.get("seed", seed))
    if graph.n != n:
        raise ConfigError(f"graph has {graph.n} nodes but the problem has {n}")
    mixing_cfg = cfg.get("mixing", "max_degree")
    if mixing_cfg == "max_degree":
        w = max_degree_mixing(graph)
    elif isinstance(mixing_cfg, dict) and "entries" in mixing_cfg:
        w = explicit_mixing(graph, mixing_cfg["entries"])
    else:
        raise ConfigError(f"unknown mixing spec {mixing_cfg!r}")
    return Topology(graph, w)


def build_oracle_spec(cfg: dict | None) -> OracleSpec:
    cfg = cfg or {}
    try:
        return OracleSpec(mode=cfg.get("mode", "batch"),
                          batch_size=int(cfg.get("batch_size", 1)),
                          sigma=float(cfg.get("sigma", 0.0)))
    except ValueError as e:
        raise ConfigError(str(e))


def _stepsize_from(cfg: dict, problem, spec: OracleSpec, iters: int) -> StepSize:
    kind = cfg.get("kind", "constant")
    if kind == "constant":
        return StepSize.constant(float(_require(cfg, "alpha", "stepsize")))
    if kind == "one_over_t":
        return StepSize.one_over_t(float(cfg.get("c", 1.0)))
    if kind == "horizon":
        return StepSize.horizon(problem.n, float(cfg.get("sigma", spec.sigma)),
                                int(cfg.get("T", iters)),
                                kappa=float(cfg.get("kappa", 1.0)))
    raise ConfigError(f"unknown stepsize kind {kind!r}")


def default_algo_config(algo_id: str, problem, spec: OracleSpec,
                        iters: int, lhat: float | None = None) -> AlgoConfig:
    """Fill unspecified tuning knobs: batch methods get alpha = 1/(4 Lhat)
    from a power-iteration Lipschitz estimate; stochastic methods get the
    horizon step kappa*sqrt(n/(sigma^2 T)) when sigma is known, else the
    batch default; primal-dual penalties default to c = beta = Lhat."""
    lhat = estimate_stack_lipschitz(problem) if lhat is None else lhat
    lhat = max(lhat, 1e-12)
    cfg = AlgoConfig(algorithm=algo_id)
    if algo_id == "xfilter":
        cfg.c = lhat
        cfg.beta = lhat
    elif algo_id == "prox_gpda":
        # the linearized primal step tolerates (and needs) a lighter penalty
        cfg.c = lhat / 2.0
        cfg.beta = lhat / 2.0
    else:
        stochastic = ALGORITHMS[algo_id].stochastic and spec.sigma > 0
        cfg.stepsize = (StepSize.horizon(problem.n, spec.sigma, iters)
                        if stochastic else StepSize.constant(1.0 / (4.0 * lhat)))
    return cfg


def build_algo_config(cfg: dict, problem, spec: OracleSpec,
                      iters: int) -> AlgoConfig:
    algo_id = _require(cfg, "algorithm", "algorithm")
    if algo_id not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algo_id!r}")
    base = default_algo_config(algo_id, problem, spec, iters)
    if "stepsize" in cfg:
        base.stepsize = _stepsize_from(cfg["stepsize"], problem, spec, iters)
    if "c" in cfg:
        base.c = float(cfg["c"])
    if "beta" in cfg:
        b = cfg["beta"]
        base.beta = np.asarray(b, dtype=float) if isinstance(b, list) else float(b)
    if "Q" in cfg:
        base.cheby_order = int(cfg["Q"])
    base.force = bool(cfg.get("force", False))
    return base


def build_theta0(cfg: dict | None, problem, seed) -> np.ndarray:
    cfg = cfg or {"kind": "gaussian"}
    kind = cfg.get("kind", "gaussian")
    if kind == "zeros":
        return np.zeros((problem.n, problem.d))
    if kind == "gaussian":
        rng = np.random.default_rng(seed)
        return cfg.get("scale", 1.0) * rng.normal(size=(problem.n, problem.d))
    if kind == "explicit":
        th = np.asarray(_require(cfg, "values", "init"), dtype=float)
        if th.shape != (problem.n, problem.d):
            raise ConfigError(f"init values must be {(problem.n, problem.d)}")
        return th.copy()
    raise ConfigError(f"unknown init kind {kind!r}")


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------

@dataclass
class RunContext:
    problem: Problem
    topo: Topology
    oracle: Oracle
    algo_id: str
    algo_cfg: AlgoConfig
    state: object
    epsilon: float
    divergence_threshold: float
    metric_every: int = 1
    records: list = field(default_factory=list)
    metric_grad_passes: int = 0   # gap evaluations, never mixed into run counters


@dataclass
class RunResult:
    records: list
    summary: dict
    csv_path: str | None
    ctx: RunContext


def _to_target(records, epsilon):
    for r in records:
        if np.isfinite(r.gap) and r.gap <= epsilon:
            return {"iter": r.iter, "comm_rounds": r.comm_rounds,
                    "grad_eval_rounds": r.grad_eval_rounds}
    return None


def run_experiment(config: dict, replicate: int = 0, out_dir=None,
                   problem: Problem | None = None) -> RunResult:
    """Execute one replicate of a config; returns records + summary and
    writes '<name>_rep<k>.csv' when out_dir is given."""
    iters = int(config.get("iters") or config.get("algorithm", {}).get("iters", 100))
    epsilon = float(config.get("epsilon", 0.0))
    seed = int(config.get("seed", 0)) + replicate
    ss = np.random.SeedSequence(seed)
    s_prob, s_graph, s_init, s_oracle = ss.spawn(4)

    problem = problem if problem is not None \
        else build_problem(_require(config, "problem", "experiment"), s_prob)
    topo = build_topology(config.get("graph", {}), problem.n, s_graph)
    spec = build_oracle_spec(config.get("oracle"))
    oracle = Oracle(problem, spec, seed=s_oracle)
    algo_cfg = build_algo_config(_require(config, "algorithm", "experiment"),
                                 problem, spec, iters)
    algo_cfg.validate(topo)
    theta0 = build_theta0(config.get("init"), problem, s_init)

    algo = ALGORITHMS[algo_cfg.algorithm]
    state = algo.init(theta0, oracle, topo, algo_cfg)
    ctx = RunContext(problem=problem, topo=topo, oracle=oracle,
                     algo_id=algo_cfg.algorithm, algo_cfg=algo_cfg,
                     state=state, epsilon=epsilon,
                     divergence_threshold=float(
                         config.get("divergence_threshold",
                                    metrics.DIVERGENCE_THRESHOLD)),
                     metric_every=int(config.get("metric_every", 1)))
    record(ctx, state.t)
    while state.t < iters and state.status == STATUS_RUNNING:
        state = algo.step(state, oracle, topo, algo_cfg)
        if (state.t % ctx.metric_every == 0 or state.t >= iters
                or state.status != STATUS_RUNNING):
            record(ctx, state.t)
        if state.status != STATUS_RUNNING:
            break

    finite_gaps = [r.gap for r in ctx.records if np.isfinite(r.gap)]
    summary = {
        "algorithm": algo_cfg.algorithm,
        "replicate": replicate,
        "seed": seed,
        "status": state.status,
        "iters_run": state.t,
        "final_gap": ctx.records[-1].gap,
        "mean_gap": float(np.mean(finite_gaps)) if finite_gaps else float("nan"),
        "comm_rounds": state.counters.comm_rounds,
        "grad_eval_rounds": state.counters.grad_eval_rounds,
        "sample_grad_evals": state.counters.sample_grad_evals,
        "epoch": ctx.records[-1].epoch,
        "to_target": _to_target(ctx.records, epsilon),
    }
    if algo_cfg.algorithm in ("gt", "gnsd"):
        # diagnostic only: W >= W^2 >= 2W - I ties tracking to the
        # generalized two-step form, but is not enforced
        hat_w = algo_cfg.gt_mixing if algo_cfg.gt_mixing is not None else topo.w
        summary["tracker_mixing_contraction_ok"] = hat_w.psd_contraction_ok

    csv_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        name = config.get("name", "run")
        csv_path = str(out_dir / f"{name}_rep{replicate}.csv")
        write_records(csv_path, ctx.records)
        summary["csv"] = csv_path
    return RunResult(records=ctx.records, summary=summary,
                     csv_path=csv_path, ctx=ctx)


def default_replicates(config: dict) -> int:
    if "replicates" in config:
        return int(config["replicates"])
    # single stochastic trajectories are noisy; medians over 5 seeds stabilize
    return 5 if build_oracle_spec(config.get("oracle")).stochastic else 1


def run(config: dict, out_dir=None, problem: Problem | None = None) -> dict:
    """Run all replicates of one config; summary reports the median final gap."""
    reps = default_replicates(config)
    results = [run_experiment(config, replicate=r, out_dir=out_dir,
                              problem=problem) for r in range(reps)]
    finals = [r.summary["final_gap"] for r in results]
    return {
        "name": config.get("name", "run"),
        "replicates": reps,
        "median_final_gap": float(np.median(finals)),
        "statuses": [r.summary["status"] for r in results],
        "runs": [r.summary for r in results],
        "results": results,
    }


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _apply_axis(config: dict, axis: str, value) -> dict:
    cfg = copy.deepcopy(config)
    if axis == "algorithm":
        # per-algorithm tuning comes from the default rules, so stale knobs
        # from the base config do not leak across methods
        cfg["algorithm"] = {"algorithm": value}
    elif axis == "graph":
        if isinstance(value, dict):
            cfg["graph"] = {**cfg.get("graph", {}), **value}
        else:
            cfg.setdefault("graph", {})["type"] = value
    elif axis == "batch_size":
        cfg.setdefault("oracle", {})["batch_size"] = int(value)
    elif axis == "n":
        cfg.setdefault("problem", {})["n"] = int(value)
        cfg.setdefault("graph", {})["n"] = int(value)
    elif axis == "heterogeneity":
        cfg.setdefault("problem", {})["heterogeneity"] = value
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    cfg["name"] = f"{config.get('name', 'run')}_{axis}_{_slug(value)}"
    return cfg


def _slug(value) -> str:
    s = json.dumps(value) if isinstance(value, (dict, list)) else str(value)
    return "".join(ch if ch.isalnum() else "-" for ch in s).strip("-")


def sweep(config: dict, axis: str, values, out_dir=None) -> dict:
    """Run the config once per axis value with identical seeds, reusing one
    generated problem per seed whenever the axis does not change it, and
    rank variants by rounds needed to reach the target epsilon."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    problem_cache: dict = {}
    entries = []
    for value in values:
        cfg = _apply_axis(config, axis, value)
        reps = default_replicates(cfg)
        results = []
        for r in range(reps):
            problem = None
            if axis in ("algorithm", "graph", "batch_size"):
                seed = int(cfg.get("seed", 0)) + r
                key = (seed, json.dumps(cfg.get("problem"), sort_keys=True))
                if key not in problem_cache:
                    s_prob = np.random.SeedSequence(seed).spawn(4)[0]
                    problem_cache[key] = build_problem(cfg["problem"], s_prob)
                problem = problem_cache[key]
            results.append(run_experiment(cfg, replicate=r, out_dir=out_dir,
                                          problem=problem))
        finals = [res.summary["final_gap"] for res in results]
        targets = [res.summary["to_target"] for res in results]

        def _median_rounds(field_name):
            vals = [t[field_name] if t is not None else math.inf for t in targets]
            return float(np.median(vals))

        entries.append({
            "value": value,
            "median_final_gap": float(np.median(finals)),
            "median_comm_to_target": _median_rounds("comm_rounds"),
            "median_grad_to_target": _median_rounds("grad_eval_rounds"),
            "statuses": [res.summary["status"] for res in results],
            "runs": [res.summary for res in results],
        })
    return {
        "axis": axis,
        "entries": entries,
        "ranking_by_comm_rounds": sorted(
            (e["value"] for e in entries),
            key=lambda v: next(e["median_comm_to_target"] for e in entries
                               if e["value"] == v)),
        "ranking_by_grad_rounds": sorted(
            (e["value"] for e in entries),
            key=lambda v: next(e["median_grad_to_target"] for e in entries
                               if e["value"] == v)),
    }


# ---------------------------------------------------------------------------
# verification suites
# ---------------------------------------------------------------------------

@dataclass
class VerifyReport:
    suite: str
    checks: list            # (name, passed, detail)

    @property
    def passed(self) -> bool:
        return all(ok for (_, ok, _) in self.checks)

    def lines(self):
        for name, ok, detail in self.checks:
            yield f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"


def _gap_trajectory_hits(problem, topo, oracle, algo_id, cfg, theta0,
                         target, max_iters, above=False, check_every=1):
    """Return the first iteration whose gap crosses the target, else None."""
    algo = ALGORITHMS[algo_id]
    state = algo.init(theta0, oracle, topo, cfg)
    while state.t < max_iters:
        if state.t % check_every == 0 or state.t <= 1:
            comp = stationarity_gap(problem, state.theta)
            if above and (not np.isfinite(comp.gap) or comp.gap >= target):
                return state.t
            if not above and comp.gap <= target:
                return state.t
        state = algo.step(state, oracle, topo, cfg)
        if state.status != STATUS_RUNNING:
            return state.t if above else None
    comp = stationarity_gap(problem, state.theta)
    if above and (not np.isfinite(comp.gap) or comp.gap >= target):
        return state.t
    if not above and comp.gap <= target:
        return state.t
    return None


def _check_equivalence(seed):
    rep = verify_equivalences(seed=seed)
    return [(f"equivalence/{k}", v <= rep.tol, f"max deviation {v:.3e}")
            for k, v in rep.deviations.items()]


def counterexample_instances(seed=0):
    """(problem, topology, theta0) for the 2-agent pair and the 3-node line."""
    pair = opposing_quadratic_pair()
    w2 = averaging_pair_mixing()
    topo2 = Topology(w2.graph, w2)
    th2 = np.random.default_rng(seed).normal(size=(2, 1))
    line, w3 = line3_counterexample()
    topo3 = Topology(w3.graph, w3)
    th3 = np.random.default_rng(seed + 1).normal(size=(3, 1))
    return (pair, topo2, th2), (line, topo3, th3)


def _check_counterexamples(seed):
    checks = []
    (pair, topo2, th2), (line, topo3, th3) = counterexample_instances(seed)
    orc2 = Oracle(pair, OracleSpec("batch"))
    orc3 = Oracle(line, OracleSpec("batch"))

    # opposing quadratics: the classic map applies the raw local gradients,
    # so with the 1/n-scaled oracle the matching step size is n*gamma
    for gamma in (0.01, 0.1, 1.0):
        cfg = AlgoConfig("dgd", stepsize=StepSize.constant(2 * gamma))
        hit = _gap_trajectory_hits(pair, topo2, orc2, "dgd", cfg, th2,
                                   target=1e6, max_iters=200_000, above=True,
                                   check_every=50)
        checks.append((f"counterexamples/dgd_diverges_gamma_{gamma}", hit is not None,
                       f"gap >= 1e6 at iteration {hit}"))
    for algo_id, cfg in [
            ("prox_gpda", AlgoConfig("prox_gpda", c=1.0, beta=1.0)),
            ("extra", AlgoConfig("extra", stepsize=StepSize.constant(0.3))),
            ("gt", AlgoConfig("gt", stepsize=StepSize.constant(0.3))),
            ("gnsd", AlgoConfig("gnsd", stepsize=StepSize.constant(0.3)))]:
        hit = _gap_trajectory_hits(pair, topo2, orc2, algo_id, cfg, th2,
                                   target=1e-8, max_iters=10_000)
        checks.append((f"counterexamples/{algo_id}_converges_on_pair",
                       hit is not None, f"gap <= 1e-8 at iteration {hit}"))

    for label, sched in [("alpha_0.25", StepSize.constant(0.25)),
                         ("alpha_1_over_t", StepSize.one_over_t(1.0))]:
        cfg = AlgoConfig("d2", stepsize=sched, force=True)
        hit = _gap_trajectory_hits(line, topo3, orc3, "d2", cfg, th3,
                                   target=1e6, max_iters=20_000, above=True)
        checks.append((f"counterexamples/d2_diverges_{label}", hit is not None,
                       f"gap >= 1e6 at iteration {hit}"))
    for algo_id in ("gt", "gnsd"):
        cfg = AlgoConfig(algo_id, stepsize=StepSize.constant(0.05))
        hit = _gap_trajectory_hits(line, topo3, orc3, algo_id, cfg, th3,
                                   target=1e-8, max_iters=10_000)
        checks.append((f"counterexamples/{algo_id}_converges_on_line3",
                       hit is not None, f"gap <= 1e-8 at iteration {hit}"))
    return checks


def _check_gradients(seed):
    checks = []
    for family, kwargs in [("quadratic", {}), ("ncvx_logistic", {}),
                           ("tiny_mlp", {"d": 10, "widths": (10, 16, 8, 1)})]:
        p = generate_synthetic(family, n=3,
                               d=kwargs.pop("d", 6), m_per_agent=20,
                               seed=seed, **kwargs)
        err = finite_difference_check(p, n_points=20, seed=seed)
        checks.append((f"gradients/{family}_finite_difference", err <= 1e-5,
                       f"max relative error {err:.3e}"))
    return checks


def _check_oracles(seed, n_trials=100_000):
    checks = []
    problem = generate_synthetic("quadratic", n=2, d=3, m_per_agent=400,
                                 seed=seed)
    theta = np.random.default_rng(seed).normal(size=(2, 3))
    for spec in (OracleSpec("minibatch", batch_size=1),
                 OracleSpec("streaming", batch_size=4, sigma=1.5)):
        rep = unbiasedness_check(problem, spec, theta, n_trials, seed=seed)
        checks.append((f"oracles/unbiased_{spec.mode}", rep.passed,
                       f"worst |dev|/bound {rep.max_violation:.3f} over {n_trials} trials"))
    for spec in (OracleSpec("minibatch", batch_size=2),
                 OracleSpec("streaming", batch_size=2, sigma=1.5)):
        ok, ratio = variance_halving_check(problem, spec, theta,
                                           n_trials=10_000, seed=seed)
        checks.append((f"oracles/variance_halves_{spec.mode}", ok,
                       f"trace ratio {ratio:.3f} (want 2 +- 20%)"))
    return checks


def _check_mixing(seed):
    checks = []
    graphs = [build_graph("complete", 5), build_graph("cycle", 6),
              build_graph("path", 7), build_graph("star", 6),
              build_graph("hypercube", 8),
              build_graph("random_regular", 32, degree=5, seed=seed)]
    for g in graphs:
        w = max_degree_mixing(g)
        v = w.validation
        checks.append((f"mixing/{g.kind}_n{g.n}", v.ok,
                       f"p1={v.p1_unique_consensus} p2={v.p2_spectrum_in_unit} "
                       f"p3={v.p3_sparsity} lambda_min={v.lambda_min:.3f} "
                       f"warnings={list(v.warnings)}"))
    return checks


def verify(suite: str, seed: int = 0) -> VerifyReport:
    if suite not in VERIFY_SUITES:
        raise ConfigError(f"unknown suite {suite!r}; expected one of {VERIFY_SUITES}")
    checks = []
    if suite in ("equivalence", "all"):
        checks += _check_equivalence(seed)
    if suite in ("counterexamples", "all"):
        checks += _check_counterexamples(seed)
    if suite in ("gradients", "all"):
        checks += _check_gradients(seed)
    if suite in ("oracles", "all"):
        checks += _check_oracles(seed)
    if suite in ("mixing", "all"):
        checks += _check_mixing(seed)
    return VerifyReport(suite=suite, checks=checks)


def default_out_dir(explicit=None) -> Path:
    if explicit is not None:
        return Path(explicit)
    return Path(os.environ.get(ENV_OUT, "out"))

"""Stationarity gap, diagnostics and per-iteration run records.

The gap at a stack is the squared norm of the average gradient at the mean
iterate plus the total squared deviation from the mean; both components come
out of a single code path so the identity gap = avg_grad_norm_sq +
consensus_error holds exactly.  Gap evaluation always uses exact gradients
(the problem), never the stochastic oracle, and its cost is tracked on the
run context separately from the algorithm's own counters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CSV_HEADER = ("iter,comm_rounds,grad_eval_rounds,sample_grad_evals,"
              "gap,consensus_error,avg_grad_norm_sq,avg_cost,epoch,status")

DIVERGENCE_THRESHOLD = 1e6

STATUS_RUNNING = "running"
STATUS_CONVERGED = "converged"
STATUS_DIVERGED = "diverged"


@dataclass
class Counters:
    """Cumulative communication/computation accounting for one run."""

    comm_rounds: int = 0
    grad_eval_rounds: int = 0
    sample_grad_evals: int = 0

    def snapshot(self):
        return (self.comm_rounds, self.grad_eval_rounds, self.sample_grad_evals)


@dataclass(frozen=True)
class GapComponents:
    gap: float
    consensus_error: float
    avg_grad_norm_sq: float


def stationarity_gap(problem, theta_stack) -> GapComponents:
    """Exact gap at the stack's average; non-finite input propagates as nan."""
    theta_stack = np.asarray(theta_stack, dtype=float)
    if not np.all(np.isfinite(theta_stack)):
        return GapComponents(np.nan, np.nan, np.nan)
    theta_bar = theta_stack.mean(axis=0)
    grads = problem.grad_stack(np.broadcast_to(theta_bar,
                                               theta_stack.shape).copy())
    avg_grad_norm_sq = float(np.sum(grads.mean(axis=0) ** 2))
    consensus_error = float(np.sum((theta_stack - theta_bar) ** 2))
    return GapComponents(avg_grad_norm_sq + consensus_error,
                         consensus_error, avg_grad_norm_sq)


def heterogeneity_at(problem, theta) -> float:
    """Mean squared deviation of local gradients from their average at one
    point: a pointwise sample of the data-heterogeneity bound."""
    theta = np.asarray(theta, dtype=float)
    stack = np.broadcast_to(theta, (problem.n, problem.d)).copy()
    grads = problem.grad_stack(stack)
    return float(np.mean(np.sum((grads - grads.mean(axis=0)) ** 2, axis=1)))


@dataclass(frozen=True)
class RunRecord:
    iter: int
    comm_rounds: int
    grad_eval_rounds: int
    sample_grad_evals: int
    gap: float
    consensus_error: float
    avg_grad_norm_sq: float
    avg_cost: float
    epoch: float
    status: str


def record(ctx, t: int) -> RunRecord:
    """Append one metric row for the run context's current state.

    Marks converged when gap <= ctx.epsilon and diverged on non-finite state
    or gap above ctx.divergence_threshold.  The state keeps the last finite
    iterate, so a diverged row carries the last finite gap.
    """
    state, problem = ctx.state, ctx.problem
    comps = stationarity_gap(problem, state.theta)
    ctx.metric_grad_passes += 1

    if state.status != STATUS_DIVERGED:
        if not np.isfinite(comps.gap) or comps.gap > ctx.divergence_threshold:
            state.status = STATUS_DIVERGED
        elif comps.gap <= ctx.epsilon:
            state.status = STATUS_CONVERGED

    theta_bar = state.theta.mean(axis=0)
    stack = np.broadcast_to(theta_bar, state.theta.shape).copy()
    avg_cost = float(problem.cost_stack(stack).mean())

    row = RunRecord(
        iter=t,
        comm_rounds=state.counters.comm_rounds,
        grad_eval_rounds=state.counters.grad_eval_rounds,
        sample_grad_evals=state.counters.sample_grad_evals,
        gap=comps.gap,
        consensus_error=comps.consensus_error,
        avg_grad_norm_sq=comps.avg_grad_norm_sq,
        avg_cost=avg_cost,
        epoch=state.counters.sample_grad_evals / problem.total_samples,
        status=state.status,
    )
    ctx.records.append(row)
    return row


def _fmt(v) -> str:
    # 17 significant digits round-trips doubles bit-exactly
    return f"{v:.17g}"


def records_to_csv(records) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join([
            str(r.iter), str(r.comm_rounds), str(r.grad_eval_rounds),
            str(r.sample_grad_evals), _fmt(r.gap), _fmt(r.consensus_error),
            _fmt(r.avg_grad_norm_sq), _fmt(r.avg_cost), _fmt(r.epoch), r.status,
        ]))
    return "\n".join(lines) + "\n"


def write_records(path, records):
    with open(path, "w", newline="\n") as fh:
        fh.write(records_to_csv(records))


def read_records(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header in {path}")
    out = []
    for line in lines[1:]:
        f = line.split(",")
        out.append(RunRecord(int(f[0]), int(f[1]), int(f[2]), int(f[3]),
                             float(f[4]), float(f[5]), float(f[6]),
                             float(f[7]), float(f[8]), f[9]))
    return out

"""Cost-function families with analytic gradients and synthetic data generation.

A problem owns n per-agent local costs f_i over R^d.  Local costs and
gradients here are UNscaled; the 1/n factor of the stacked gradient is
applied by the oracle, in one place.  Each family keeps the average cost
bounded below (individual costs may be unbounded, as in the opposing
quadratics).  Problems are immutable after generation and safe for
concurrent reads.
"""

from __future__ import annotations

import csv

import numpy as np

from .topology import MixingMatrix, build_graph, explicit_mixing

FAMILIES = ("quadratic", "ncvx_logistic", "tiny_mlp")
MLP_DEFAULT_WIDTHS = (10, 16, 8, 1)
_CLAMP = 1e-12  # keeps log() finite at saturated sigmoid outputs


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Problem:
    """Shared surface: per-agent costs/gradients plus per-sample access."""

    n: int
    d: int
    family: str
    sizes: np.ndarray  # per-agent sample counts M_i

    @property
    def total_samples(self) -> int:
        return int(self.sizes.sum())

    def smoothness(self) -> float:
        """Bound on the local-gradient Lipschitz constants (analytic where
        available, else a power-iteration estimate)."""
        return float(estimate_stack_lipschitz(self) * self.n)

    # -- single-agent views -------------------------------------------------
    def local_cost(self, i: int, theta) -> float:
        return float(self.cost_stack(self._tile(i, theta))[i])

    def local_grad(self, i: int, theta) -> np.ndarray:
        return self.grad_stack(self._tile(i, theta))[i]

    def _tile(self, i, theta):
        stack = np.zeros((self.n, self.d))
        stack[i] = np.asarray(theta, dtype=float)
        return stack

    # -- stacked views (implemented by each family) -------------------------
    def cost_stack(self, theta_stack) -> np.ndarray:
        raise NotImplementedError

    def grad_stack(self, theta_stack) -> np.ndarray:
        raise NotImplementedError

    def minibatch_grad(self, i: int, theta, idx) -> np.ndarray:
        """Mean per-sample gradient of agent i over the sampled indices."""
        raise NotImplementedError


class QuadraticProblem(Problem):
    """f_i(t) = a_i/(2 M_i) sum_l ||t - b_{il}||^2; a_i may be negative."""

    family = "quadratic"

    def __init__(self, a, b_samples):
        self.a = np.asarray(a, dtype=float)
        b = np.asarray(b_samples, dtype=float)
        if b.ndim == 2:  # one sample per agent
            b = b[:, None, :]
        self.b = b
        self.n, m, self.d = b.shape
        self.sizes = np.full(self.n, m, dtype=int)
        self.b_mean = b.mean(axis=1)

    def cost_stack(self, theta_stack):
        diff = theta_stack[:, None, :] - self.b
        return 0.5 * self.a * (diff ** 2).sum(axis=2).mean(axis=1)

    def grad_stack(self, theta_stack):
        return self.a[:, None] * (theta_stack - self.b_mean)

    def minibatch_grad(self, i, theta, idx):
        return self.a[i] * (np.asarray(theta) - self.b[i, idx].mean(axis=0))

    def smoothness(self) -> float:
        return float(np.abs(self.a).max())


class NcvxLogisticProblem(Problem):
    """Binary logistic loss with the smooth non-convex regularizer
    lam * sum_s rho*t_s^2 / (1 + rho*t_s^2); labels live in {-1, +1}."""

    family = "ncvx_logistic"

    def __init__(self, features, labels, lam=0.01, rho=1.0):
        self.x = np.asarray(features, dtype=float)      # (n, M, d)
        self.y = np.asarray(labels, dtype=float)        # (n, M)
        if set(np.unique(self.y)) - {-1.0, 1.0}:
            raise ValueError("labels must be -1/+1")
        self.n, m, self.d = self.x.shape
        self.sizes = np.full(self.n, m, dtype=int)
        self.lam = float(lam)
        self.rho = float(rho)

    def _reg(self, theta_stack):
        r = self.rho * theta_stack ** 2
        return self.lam * (r / (1.0 + r)).sum(axis=-1)

    def _reg_grad(self, theta_stack):
        r = self.rho * theta_stack ** 2
        return self.lam * 2.0 * self.rho * theta_stack / (1.0 + r) ** 2

    def cost_stack(self, theta_stack):
        u = np.einsum("nmd,nd->nm", self.x, theta_stack)
        data = np.logaddexp(0.0, -self.y * u).mean(axis=1)
        return data + self._reg(theta_stack)

    def grad_stack(self, theta_stack):
        u = np.einsum("nmd,nd->nm", self.x, theta_stack)
        s = _sigmoid(-self.y * u) * self.y          # (n, M)
        data = -np.einsum("nm,nmd->nd", s, self.x) / self.x.shape[1]
        return data + self._reg_grad(theta_stack)

    def minibatch_grad(self, i, theta, idx):
        theta = np.asarray(theta, dtype=float)
        x, y = self.x[i, idx], self.y[i, idx]
        s = _sigmoid(-y * (x @ theta)) * y
        return -(s[:, None] * x).mean(axis=0) + self._reg_grad(theta)

    def smoothness(self) -> float:
        # logistic curvature is at most 1/4 per sample; the regularizer's
        # second derivative peaks at 2*lam*rho
        data = 0.25 * float((self.x ** 2).sum(axis=2).mean(axis=1).max())
        return data + 2.0 * self.lam * self.rho


class TinyMlpProblem(Problem):
    """Fully connected net (no biases), sigmoid hidden units, linear scalar
    output z, sigmoid read-out h = sigmoid(z), binary logistic loss.

    Parameters are the flattened weight matrices, first layer first, each in
    C (row-major) order; layer l maps width[l] -> width[l+1].
    """

    family = "tiny_mlp"

    def __init__(self, features, labels, widths=MLP_DEFAULT_WIDTHS):
        self.x = np.asarray(features, dtype=float)      # (n, M, widths[0])
        self.y = np.asarray(labels, dtype=float)        # (n, M), -1/+1
        if set(np.unique(self.y)) - {-1.0, 1.0}:
            raise ValueError("labels must be -1/+1")
        self.widths = tuple(int(w) for w in widths)
        if self.widths[-1] != 1 or len(self.widths) < 2:
            raise ValueError("widths must end in a scalar output layer")
        if self.x.shape[2] != self.widths[0]:
            raise ValueError("feature dimension does not match widths[0]")
        self.n, m, _ = self.x.shape
        self.sizes = np.full(self.n, m, dtype=int)
        self.shapes = [(self.widths[l + 1], self.widths[l])
                       for l in range(len(self.widths) - 1)]
        self.d = sum(r * c for (r, c) in self.shapes)

    def unflatten(self, theta):
        mats, k = [], 0
        for (r, c) in self.shapes:
            mats.append(np.asarray(theta)[k:k + r * c].reshape(r, c))
            k += r * c
        return mats

    def _forward(self, mats, x):
        acts = [x]
        for w in mats[:-1]:
            acts.append(_sigmoid(acts[-1] @ w.T))
        z = acts[-1] @ mats[-1].T                       # (M, 1) pre-sigmoid
        return acts, z[:, 0]

    def _sample_losses(self, mats, x, y):
        _, z = self._forward(mats, x)
        h = np.clip(_sigmoid(z), _CLAMP, 1.0 - _CLAMP)
        y01 = (y + 1.0) / 2.0
        return -(y01 * np.log(h) + (1.0 - y01) * np.log(1.0 - h))

    def _grad(self, mats, x, y):
        acts, z = self._forward(mats, x)
        y01 = (y + 1.0) / 2.0
        delta = (_sigmoid(z) - y01)[:, None] / x.shape[0]   # d(mean loss)/dz
        grads = [None] * len(mats)
        for l in range(len(mats) - 1, -1, -1):
            grads[l] = delta.T @ acts[l]
            if l > 0:
                delta = (delta @ mats[l]) * acts[l] * (1.0 - acts[l])
        return np.concatenate([g.ravel() for g in grads])

    def cost_stack(self, theta_stack):
        return np.array([
            self._sample_losses(self.unflatten(theta_stack[i]),
                                self.x[i], self.y[i]).mean()
            for i in range(self.n)])

    def grad_stack(self, theta_stack):
        return np.stack([
            self._grad(self.unflatten(theta_stack[i]), self.x[i], self.y[i])
            for i in range(self.n)])

    def minibatch_grad(self, i, theta, idx):
        return self._grad(self.unflatten(theta), self.x[i, idx], self.y[i, idx])


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def generate_synthetic(family: str, n: int, d: int, m_per_agent: int,
                       seed=None, heterogeneity: dict | None = None,
                       lam: float = 0.01, rho: float = 1.0,
                       widths=None) -> Problem:
    """Generate per-agent datasets.

    Homogeneous splits draw every agent's data from one distribution.  A
    heterogeneous split ({"clusters": k}, k >= n) plants k feature clusters
    with alternating labels and assigns each cluster exclusively to one
    agent, so local gradients disagree persistently.
    """
    rng = np.random.default_rng(seed)
    if family == "quadratic":
        a = rng.uniform(0.5, 1.5, size=n)
        centers = np.zeros((n, d))
        if heterogeneity is not None:
            centers = 3.0 * rng.normal(size=(n, d))
        b = centers[:, None, :] + rng.normal(size=(n, m_per_agent, d))
        return QuadraticProblem(a, b)

    if family == "ncvx_logistic":
        x, y = _classification_data(rng, n, d, m_per_agent, heterogeneity)
        return NcvxLogisticProblem(x, y, lam=lam, rho=rho)

    if family == "tiny_mlp":
        widths = tuple(widths) if widths is not None else MLP_DEFAULT_WIDTHS
        x, y = _classification_data(rng, n, widths[0], m_per_agent, heterogeneity)
        return TinyMlpProblem(x, y, widths=widths)

    raise ValueError(f"unknown family {family!r}")


def _classification_data(rng, n, d, m, heterogeneity):
    if heterogeneity is None:
        x = rng.normal(size=(n, m, d))
        w_star = rng.normal(size=d)
        y = np.where(x @ w_star >= 0.0, 1.0, -1.0)
        return x, y

    k = int(heterogeneity.get("clusters", 2 * n))
    spread = float(heterogeneity.get("spread", 1.0))
    separation = float(heterogeneity.get("separation", 3.0))
    if k < n:
        raise ValueError(
            f"heterogeneous split needs at least {n} clusters for {n} agents, got {k}")
    means = separation * rng.normal(size=(k, d))
    labels = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
    x = np.empty((n, m, d))
    y = np.empty((n, m))
    for i in range(n):
        own = np.arange(k)[np.arange(k) % n == i]    # exclusive clusters
        pick = own[rng.integers(0, len(own), size=m)]
        x[i] = means[pick] + spread * rng.normal(size=(m, d))
        y[i] = labels[pick]
    return x, y


def load_dataset_csv(path, lam: float = 0.01, rho: float = 1.0) -> NcvxLogisticProblem:
    """Load 'agent,label,feature_1..feature_d' rows into a logistic problem.

    Agents must be 0..n-1 with equal sample counts; labels must be -1/+1.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["agent", "label"] or \
                any(h != f"feature_{j+1}" for j, h in enumerate(header[2:])):
            raise ValueError(f"bad dataset header: {header}")
        d = len(header) - 2
        rows = [(int(r[0]), float(r[1]), [float(v) for v in r[2:]]) for r in reader]
    if not rows:
        raise ValueError("empty dataset")
    agents = sorted({r[0] for r in rows})
    if agents != list(range(len(agents))):
        raise ValueError(f"agent ids must be contiguous from 0, got {agents}")
    per_agent = {i: [(lab, feat) for (a, lab, feat) in rows if a == i] for i in agents}
    counts = {len(v) for v in per_agent.values()}
    if len(counts) != 1:
        raise ValueError("all agents need the same number of samples")
    x = np.array([[feat for (_, feat) in per_agent[i]] for i in agents])
    y = np.array([[lab for (lab, _) in per_agent[i]] for i in agents])
    if x.shape[2] != d:
        raise ValueError("inconsistent feature dimension")
    return NcvxLogisticProblem(x, y, lam=lam, rho=rho)


# ---------------------------------------------------------------------------
# the two hand-sized divergence instances
# ---------------------------------------------------------------------------

def opposing_quadratic_pair() -> QuadraticProblem:
    """Two agents, one edge, f_1 = t^2/2 and f_2 = -t^2/2: every consensual
    point is optimal, yet plain decentralized GD diverges at any constant step."""
    return QuadraticProblem(a=[1.0, -1.0], b_samples=np.zeros((2, 1, 1)))


def line3_counterexample() -> tuple[QuadraticProblem, MixingMatrix]:
    """Three-node line with f_i = (t - b_i)^2, b = (0, 1, 2), and the mixing
    matrix with spectrum {-0.5, 0.5, 1} that breaks D2's step-size condition."""
    problem = QuadraticProblem(a=[2.0, 2.0, 2.0],
                               b_samples=np.array([[[0.0]], [[1.0]], [[2.0]]]))
    graph = build_graph("path", 3)
    w = explicit_mixing(graph, [[0.5, 0.5, 0.0],
                                [0.5, 0.0, 0.5],
                                [0.0, 0.5, 0.5]])
    return problem, w


def averaging_pair_mixing() -> MixingMatrix:
    """The 2-agent uniform averaging matrix [[.5, .5], [.5, .5]]."""
    return explicit_mixing(build_graph("complete", 2), [[0.5, 0.5], [0.5, 0.5]])


# ---------------------------------------------------------------------------
# smoothness / gradient checks
# ---------------------------------------------------------------------------

def estimate_stack_lipschitz(problem: Problem, iters: int = 25, seed=0) -> float:
    """Power-iteration estimate of the Lipschitz constant of the 1/n-scaled
    stacked gradient, via central differences at the origin."""
    rng = np.random.default_rng(seed)
    theta0 = np.zeros((problem.n, problem.d))
    v = rng.normal(size=theta0.shape)
    v /= np.linalg.norm(v)
    eps, lam = 1e-5, 0.0
    for _ in range(iters):
        u = (problem.grad_stack(theta0 + eps * v)
             - problem.grad_stack(theta0 - eps * v)) / (2.0 * eps * problem.n)
        lam = np.linalg.norm(u)
        if lam == 0.0:
            return 0.0
        v = u / lam
    return float(lam)


def finite_difference_check(problem: Problem, n_points: int = 20, seed=0,
                            step: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients
    over random (agent, point) pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        i = int(rng.integers(problem.n))
        theta = rng.normal(size=problem.d)
        g = problem.local_grad(i, theta)
        fd = np.empty_like(g)
        for s in range(problem.d):
            e = np.zeros(problem.d)
            e[s] = step
            fd[s] = (problem.local_cost(i, theta + e)
                     - problem.local_cost(i, theta - e)) / (2.0 * step)
        rel = np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-8)
        worst = max(worst, float(rel))
    return worst

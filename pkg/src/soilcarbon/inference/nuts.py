"""No-U-Turn sampler with dual-averaging step size adaptation.

A single chain is a plain function of a log-density-and-gradient callable,
so the sampler is testable against closed-form targets independently of
the soil-carbon posterior.  Trees are built recursively with multinomial
sampling of the proposal; the trajectory stops when the generalized
no-U-turn criterion fires at either end or a divergence is detected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["NutsConfig", "ChainStats", "nuts_chain", "find_reasonable_epsilon"]

DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class NutsConfig:
    """Tuning knobs for one chain."""

    max_depth: int = 10
    target_accept: float = 0.8
    init_step_size: float | None = None
    adapt_mass: bool = True

    def __post_init__(self):
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must be in (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass
class ChainStats:
    """Sampler health counters accumulated over the post-warmup phase."""

    step_size: float = 0.0
    n_divergent: int = 0
    mean_accept: float = 0.0
    mean_depth: float = 0.0
    n_leapfrog: int = 0
    inv_mass: np.ndarray = field(default_factory=lambda: np.array([]))


class _DualAveraging:
    """Nesterov dual averaging of log step size (Hoffman and Gelman 2014)."""

    def __init__(self, eps0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept_prob):
        self.count += 1
        w = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob)
        self.log_eps = self.mu - math.sqrt(self.count) / self.gamma * self.h_bar
        eta = self.count ** -self.kappa
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar

    @property
    def step_size(self):
        return math.exp(self.log_eps)

    @property
    def adapted_step_size(self):
        return math.exp(self.log_eps_bar)


class _Welford:
    """Running mean and variance of sampled positions."""

    def __init__(self, dim):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def push(self, x):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def variance(self):
        if self.n < 2:
            return np.ones_like(self.mean)
        var = self.m2 / (self.n - 1)
        # Stan-style regularization toward unit scale for short windows
        w = self.n / (self.n + 5.0)
        return w * var + (1.0 - w) * 1e-3


def _adaptation_windows(n_warmup, init_buffer=75, term_buffer=50, base_window=25):
    """Iteration indices at which the mass matrix is refreshed.

    Follows the usual three-phase layout: a fast initial buffer (step size
    only), a sequence of doubling slow windows (mass estimation), and a
    fast terminal buffer.  Returns (window_end_indices, first_slow_iter).
    """
    if n_warmup < 20:
        return [], n_warmup
    if n_warmup < init_buffer + term_buffer + base_window:
        init_buffer = int(0.15 * n_warmup)
        term_buffer = int(0.10 * n_warmup)
        base_window = n_warmup - init_buffer - term_buffer
    ends = []
    start = init_buffer
    size = base_window
    while True:
        end = start + size
        if end + 2 * size > n_warmup - term_buffer:
            end = n_warmup - term_buffer
            ends.append(end)
            break
        ends.append(end)
        start = end
        size *= 2
    return ends, init_buffer


def find_reasonable_epsilon(logp_and_grad, u0, rng, inv_mass=None):
    """Heuristic initial step size: double or halve until the one-step
    acceptance probability crosses 0.5."""
    u0 = np.asarray(u0, dtype=float)
    if inv_mass is None:
        inv_mass = np.ones_like(u0)
    eps = 1.0
    r0 = rng.standard_normal(u0.shape) / np.sqrt(inv_mass)
    lp0, g0 = logp_and_grad(u0)
    h0 = -lp0 + 0.5 * float(np.dot(r0 * inv_mass, r0))

    def one_step(eps):
        r = r0 + 0.5 * eps * g0
        u = u0 + eps * inv_mass * r
        lp, g = logp_and_grad(u)
        r = r + 0.5 * eps * g
        if not np.isfinite(lp):
            return -math.inf
        return -(-lp + 0.5 * float(np.dot(r * inv_mass, r))) + h0

    log_joint = one_step(eps)
    direction = 1.0 if log_joint > math.log(0.5) else -1.0
    for _ in range(100):
        eps *= 2.0 ** direction
        log_joint = one_step(eps)
        if direction * log_joint <= direction * math.log(0.5):
            return eps
        if eps < 1e-12 or eps > 1e7:
            break
    return eps


@dataclass
class _Tree:
    u_minus: np.ndarray
    r_minus: np.ndarray
    g_minus: np.ndarray
    u_plus: np.ndarray
    r_plus: np.ndarray
    g_plus: np.ndarray
    u_prop: np.ndarray
    g_prop: np.ndarray
    lp_prop: float
    log_sum_w: float
    r_sum: np.ndarray
    sum_accept: float
    n_accept: int
    n_leapfrog: int
    turning: bool
    diverging: bool


def _leapfrog(logp_and_grad, u, r, grad, eps, inv_mass):
    r_half = r + 0.5 * eps * grad
    u_new = u + eps * inv_mass * r_half
    lp, g = logp_and_grad(u_new)
    r_new = r_half + 0.5 * eps * g
    return u_new, r_new, lp, g


def _is_turning(r_sum, r_minus, r_plus, inv_mass):
    return (
        float(np.dot(r_sum, inv_mass * r_minus)) <= 0.0
        or float(np.dot(r_sum, inv_mass * r_plus)) <= 0.0
    )


def _build_tree(logp_and_grad, u, r, grad, direction, depth, eps, inv_mass, h0, rng):
    if depth == 0:
        u1, r1, lp1, g1 = _leapfrog(
            logp_and_grad, u, r, grad, direction * eps, inv_mass
        )
        if np.isfinite(lp1):
            h = -lp1 + 0.5 * float(np.dot(r1 * inv_mass, r1))
        else:
            h = math.inf
        log_w = h0 - h
        diverging = (h - h0) > DIVERGENCE_THRESHOLD
        accept = min(1.0, math.exp(min(0.0, log_w)))
        return _Tree(
            u1, r1, g1, u1, r1, g1, u1, g1, lp1,
            log_sum_w=log_w if math.isfinite(log_w) else -math.inf,
            r_sum=r1.copy(),
            sum_accept=accept,
            n_accept=1,
            n_leapfrog=1,
            turning=False,
            diverging=diverging,
        )

    first = _build_tree(
        logp_and_grad, u, r, grad, direction, depth - 1, eps, inv_mass, h0, rng
    )
    if first.turning or first.diverging:
        return first
    if direction == 1:
        second = _build_tree(
            logp_and_grad, first.u_plus, first.r_plus, first.g_plus,
            direction, depth - 1, eps, inv_mass, h0, rng,
        )
        first.u_plus, first.r_plus, first.g_plus = (
            second.u_plus, second.r_plus, second.g_plus,
        )
    else:
        second = _build_tree(
            logp_and_grad, first.u_minus, first.r_minus, first.g_minus,
            direction, depth - 1, eps, inv_mass, h0, rng,
        )
        first.u_minus, first.r_minus, first.g_minus = (
            second.u_minus, second.r_minus, second.g_minus,
        )

    total_log_w = np.logaddexp(first.log_sum_w, second.log_sum_w)
    if second.log_sum_w > -math.inf and math.log(rng.uniform()) < (
        second.log_sum_w - total_log_w
    ):
        first.u_prop = second.u_prop
        first.g_prop = second.g_prop
        first.lp_prop = second.lp_prop
    first.log_sum_w = total_log_w
    first.r_sum = first.r_sum + second.r_sum
    first.sum_accept += second.sum_accept
    first.n_accept += second.n_accept
    first.n_leapfrog += second.n_leapfrog
    first.diverging = second.diverging
    first.turning = second.turning or _is_turning(
        first.r_sum, first.r_minus, first.r_plus, inv_mass
    )
    return first


def _transition(logp_and_grad, u, lp, grad, eps, inv_mass, max_depth, rng):
    """One NUTS transition. Returns (u', lp', grad', accept_stat, depth,
    diverged, n_leapfrog)."""
    r0 = rng.standard_normal(u.shape) / np.sqrt(inv_mass)
    h0 = -lp + 0.5 * float(np.dot(r0 * inv_mass, r0))

    tree = _Tree(
        u.copy(), r0.copy(), grad.copy(), u.copy(), r0.copy(), grad.copy(),
        u.copy(), grad.copy(), lp,
        log_sum_w=0.0, r_sum=r0.copy(),
        sum_accept=0.0, n_accept=0, n_leapfrog=0,
        turning=False, diverging=False,
    )
    depth = 0
    diverged = False
    while depth < max_depth:
        direction = 1 if rng.uniform() < 0.5 else -1
        if direction == 1:
            sub = _build_tree(
                logp_and_grad, tree.u_plus, tree.r_plus, tree.g_plus,
                1, depth, eps, inv_mass, h0, rng,
            )
            tree.u_plus, tree.r_plus, tree.g_plus = sub.u_plus, sub.r_plus, sub.g_plus
        else:
            sub = _build_tree(
                logp_and_grad, tree.u_minus, tree.r_minus, tree.g_minus,
                -1, depth, eps, inv_mass, h0, rng,
            )
            tree.u_minus, tree.r_minus, tree.g_minus = (
                sub.u_minus, sub.r_minus, sub.g_minus,
            )
        tree.sum_accept += sub.sum_accept
        tree.n_accept += sub.n_accept
        tree.n_leapfrog += sub.n_leapfrog
        if sub.diverging:
            diverged = True
            break
        if sub.turning:
            break
        # biased progressive sampling: favor the new subtree
        if math.log(rng.uniform()) < sub.log_sum_w - tree.log_sum_w:
            tree.u_prop = sub.u_prop
            tree.g_prop = sub.g_prop
            tree.lp_prop = sub.lp_prop
        tree.log_sum_w = np.logaddexp(tree.log_sum_w, sub.log_sum_w)
        tree.r_sum = tree.r_sum + sub.r_sum
        depth += 1
        if _is_turning(tree.r_sum, tree.r_minus, tree.r_plus, inv_mass):
            break

    accept_stat = tree.sum_accept / max(tree.n_accept, 1)
    return (
        tree.u_prop, tree.lp_prop, tree.g_prop,
        accept_stat, depth, diverged, tree.n_leapfrog,
    )


def nuts_chain(
    logp_and_grad,
    u0,
    n_warmup: int,
    n_iter: int,
    thin: int,
    rng: np.random.Generator,
    config: NutsConfig = NutsConfig(),
):
    """Run one NUTS chain and return (kept_draws, stats).

    ``kept_draws`` holds every ``thin``-th post-warmup draw (unconstrained
    scale), shape (n_iter // thin, dim).  Step size adapts by dual
    averaging over the warmup; the diagonal mass matrix is re-estimated at
    the end of each slow adaptation window.  Nothing adapts after warmup.
    """
    if thin < 1:
        raise ValueError("thin must be >= 1")
    u = np.array(u0, dtype=float)
    dim = u.size
    lp, grad = logp_and_grad(u)
    if not math.isfinite(lp):
        raise ValueError("initial point has zero posterior density")

    inv_mass = np.ones(dim)
    eps = config.init_step_size or find_reasonable_epsilon(
        logp_and_grad, u, rng, inv_mass
    )
    da = _DualAveraging(eps, config.target_accept)
    window_ends, first_slow = _adaptation_windows(n_warmup)
    if not config.adapt_mass:
        window_ends = []
    welford = _Welford(dim)

    for it in range(n_warmup):
        u, lp, grad, accept, _, _, _ = _transition(
            logp_and_grad, u, lp, grad, da.step_size, inv_mass, config.max_depth, rng
        )
        da.update(accept)
        if window_ends and it >= first_slow:
            welford.push(u)
        if window_ends and (it + 1) == window_ends[0]:
            inv_mass = welford.variance()
            welford = _Welford(dim)
            window_ends.pop(0)
            # re-tune the step size for the new metric
            eps = find_reasonable_epsilon(logp_and_grad, u, rng, inv_mass)
            da = _DualAveraging(eps, config.target_accept)

    eps = da.adapted_step_size if n_warmup > 0 else da.step_size
    stats = ChainStats(step_size=eps, inv_mass=inv_mass.copy())

    kept = np.empty((n_iter // thin, dim))
    accept_sum = 0.0
    depth_sum = 0
    for it in range(1, n_iter + 1):
        u, lp, grad, accept, depth, diverged, n_leap = _transition(
            logp_and_grad, u, lp, grad, eps, inv_mass, config.max_depth, rng
        )
        accept_sum += accept
        depth_sum += depth
        stats.n_leapfrog += n_leap
        if diverged:
            stats.n_divergent += 1
        if it % thin == 0:
            kept[it // thin - 1] = u
    if n_iter:
        stats.mean_accept = accept_sum / n_iter
        stats.mean_depth = depth_sum / n_iter
    return kept, stats

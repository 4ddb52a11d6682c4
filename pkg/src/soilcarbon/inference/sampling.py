"""Multi-chain driver around the NUTS kernel.

Chains are seeded from spawned :class:`numpy.random.SeedSequence` streams,
so a (seed, chain index) pair fully determines a chain no matter whether
chains run sequentially or in worker processes.
"""

from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..priortable import PriorTable
from .nuts import ChainStats, NutsConfig, nuts_chain
from .posterior import build_posterior

__all__ = ["SamplerConfig", "ChainDraws", "run_hmc"]


@dataclass(frozen=True)
class SamplerConfig:
    """Run-level MCMC settings."""

    n_chains: int = 6
    n_warmup: int = 20000
    n_iter: int = 50000
    thin: int = 10
    seed: int = 0
    max_depth: int = 10
    target_accept: float = 0.8
    n_workers: int = 1

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("need at least one chain")
        if self.n_iter < 1 or self.n_warmup < 0:
            raise ValueError("iteration counts must be positive")
        if self.thin < 1 or self.n_iter % self.thin != 0:
            raise ValueError("thin must be >= 1 and divide n_iter")

    @property
    def n_kept(self) -> int:
        return self.n_iter // self.thin


@dataclass
class ChainDraws:
    """Kept draws of one chain, on the constrained (model) scale."""

    chain_id: int
    names: list
    draws: np.ndarray  # (n_kept, dim)
    stats: ChainStats = field(default_factory=ChainStats)

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]


def _init_with_retries(target, rng, max_retries=100):
    last = None
    for _ in range(max_retries):
        u0 = target.initial_point(rng)
        lp, _ = target.logp_and_grad(u0)
        if np.isfinite(lp):
            return u0
        last = lp
    raise RuntimeError(
        f"no finite-density starting point found in {max_retries} prior draws "
        f"(last log density {last})"
    )


def _run_one_chain(target, chain_id: int, seed_seq, config: SamplerConfig):
    rng = np.random.default_rng(seed_seq)
    u0 = _init_with_retries(target, rng)
    kernel_config = NutsConfig(
        max_depth=config.max_depth, target_accept=config.target_accept
    )
    kept_u, stats = nuts_chain(
        target.logp_and_grad,
        u0,
        config.n_warmup,
        config.n_iter,
        config.thin,
        rng,
        kernel_config,
    )
    draws = np.stack([target.constrain(u) for u in kept_u])
    return ChainDraws(chain_id=chain_id, names=list(target.names),
                      draws=draws, stats=stats)


def _chain_worker(args):
    plots, priors_blob, chain_id, entropy, config = args
    from ..priortable import prior_from_dict

    entries = {k: prior_from_dict(v) for k, v in priors_blob["entries"].items()}
    priors = PriorTable(
        entries=entries,
        treatments=tuple(priors_blob["treatments"]),
        n_plots=priors_blob["n_plots"],
    )
    target = build_posterior(plots, priors)
    seq = np.random.SeedSequence(entropy=entropy, spawn_key=(chain_id,))
    return _run_one_chain(target, chain_id, seq, config)


def run_hmc(plots, priors: PriorTable, config: SamplerConfig, target=None):
    """Sample the posterior with several NUTS chains.

    Returns a list of :class:`ChainDraws`, one per chain, in chain order.
    ``target`` overrides the posterior built from ``plots``/``priors``
    with any object exposing ``logp_and_grad``, ``initial_point``,
    ``constrain`` and ``names`` (used by tests against known densities).

    With ``config.n_workers > 1`` chains run in spawned worker processes,
    each rebuilding the posterior; results are bit-identical to a
    sequential run because every chain owns an independent seed stream.
    """
    root = np.random.SeedSequence(entropy=config.seed)
    seqs = root.spawn(config.n_chains)

    if target is not None or config.n_workers <= 1 or config.n_chains == 1:
        if target is None:
            target = build_posterior(plots, priors)
        return [
            _run_one_chain(target, c, seqs[c], config)
            for c in range(config.n_chains)
        ]

    from ..priortable import prior_to_dict

    priors_blob = {
        "entries": {k: prior_to_dict(v) for k, v in priors.entries.items()},
        "treatments": list(priors.treatments),
        "n_plots": priors.n_plots,
    }
    jobs = [
        (list(plots), priors_blob, c, config.seed, config)
        for c in range(config.n_chains)
    ]
    ctx = mp.get_context("spawn")
    n_workers = min(config.n_workers, config.n_chains)
    with ProcessPoolExecutor(max_workers=n_workers, mp_context=ctx) as pool:
        results = list(pool.map(_chain_worker, jobs))
    return sorted(results, key=lambda c: c.chain_id)

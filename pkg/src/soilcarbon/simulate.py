"""Forward simulation of pool trajectories.

Used three ways: to produce deterministic mean trajectories for the
``simulate`` command, to generate synthetic experiments, and to seed the
sampler with a plausible latent path.
"""

from __future__ import annotations

import numpy as np

import math

from .inference.data import LatentTrajectory
from .pools import (
    DecayRates,
    DegenerateStateError,
    ModelParams,
    NoiseParams,
    PoolState,
    PrimaryRouting,
    step_deterministic,
    step_stochastic,
)
from .priortable import (
    KAPPA_NAMES,
    PI_M_NAMES,
    SIGMA2_MEAS_NAMES,
    SIGMA2_PROCESS_NAMES,
    log_alpha_name,
)

__all__ = ["simulate_trajectory", "params_from_values"]


def params_from_values(values: dict, treatments) -> ModelParams:
    """Assemble a ModelParams from a flat name -> value mapping.

    The mapping uses the prior-table naming scheme (``kappa_d``,
    ``log_alpha[tau]``, ``pi_m_d``, ``sigma2_toc``, ...).
    """
    rates = DecayRates(
        *(values[name] for name in KAPPA_NAMES),
        alpha={tau: math.exp(values[log_alpha_name(tau)]) for tau in treatments},
    )
    primary = PrimaryRouting(
        p_xf=values["p_xf"],
        p_hs=values["p_hs"],
        p_clay=values["p_clay"],
        r_dpm_rpm=values["r_dpm_rpm"],
        pi_m=tuple(values[name] for name in PI_M_NAMES),
    )
    noise = NoiseParams(
        sigma2_process=[values[name] for name in SIGMA2_PROCESS_NAMES],
        sigma2_meas=[values[name] for name in SIGMA2_MEAS_NAMES],
    )
    return ModelParams(rates, primary, noise)


def simulate_trajectory(
    params: ModelParams,
    init: PoolState,
    treatment: str,
    forcing,
    rng: np.random.Generator | None = None,
    stochastic: bool = False,
    max_retries: int = 100,
):
    """Run the pool dynamics forward over a forcing sequence.

    Returns ``(trajectory, co2)`` where ``co2`` is the per-step respired
    carbon under the deterministic mean dynamics.  With ``stochastic=True``
    each step applies multiplicative lognormal noise; if any pool mean hits
    zero along the way (so the noise is undefined) the whole path is
    retried with fresh noise, up to ``max_retries`` times.
    """
    forcing = tuple(forcing)
    if not forcing:
        raise ValueError("forcing sequence must be nonempty")
    if stochastic and rng is None:
        raise ValueError("stochastic simulation needs an rng")
    routing = params.routing
    attempts = max_retries if stochastic else 1
    last_err = None
    for _ in range(attempts):
        states = [init]
        co2 = []
        try:
            for f in forcing:
                mean, c = step_deterministic(
                    states[-1], params.rates, routing, treatment, f
                )
                co2.append(c)
                if stochastic:
                    eta = rng.standard_normal(5)
                    states.append(
                        step_stochastic(
                            states[-1], params.rates, routing, params.noise,
                            treatment, f, eta,
                        )
                    )
                else:
                    states.append(mean)
            return LatentTrajectory(tuple(states)), co2
        except DegenerateStateError as err:
            last_err = err
            continue
        except ValueError as err:
            # deterministic paths may legitimately hit a zero pool; only
            # the stochastic trajectory container forbids it
            if stochastic:
                last_err = err
                continue
            raise
    raise DegenerateStateError(
        f"no valid stochastic trajectory in {max_retries} attempts: {last_err}"
    )

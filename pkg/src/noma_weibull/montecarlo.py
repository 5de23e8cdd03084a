"""Link-level Monte-Carlo simulation of the TAS/EGC NOMA downlink.

Each realization draws an ``N x M`` matrix of i.i.d. Weibull envelopes for the
simulated user, picks the transmit antenna with the largest EGC envelope,
and maps the selected envelope sum to the user's SNR.  Outage is counted
directly; the ABER is semi-analytic, i.e. the conditional error probability
``erfc(sqrt(A chi)) / 2`` averaged over the realizations.

Realizations are split into chunks of ``chunk_size``.  Chunk ``c`` draws from
``numpy.random.default_rng([seed, c])``, and chunk results are combined in
chunk order with exact integer counts and correctly rounded sums, so results
do not depend on how many workers ran the chunks.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc as _erfc

from .exceptions import DomainError
from .statistics import LinkContext, chi_from_psi

__all__ = [
    "SimulationPlan",
    "SimulationResult",
    "sample_weibull",
    "tas_select",
    "snr_realization",
    "simulate_snr",
    "run",
    "DEFAULT_CHUNK",
]

DEFAULT_CHUNK = 100_000


def sample_weibull(params, rng, size=None):
    """Weibull envelope samples ``lam * (-ln U) ** (1/k)`` with ``U`` in (0, 1)."""
    u = rng.random(size)
    if size is None:
        while u == 0.0:
            u = rng.random()
        return params.lam * (-math.log(u)) ** (1 / params.k)
    zero = u == 0.0
    while zero.any():
        u[zero] = rng.random(int(zero.sum()))
        zero = u == 0.0
    return params.lam * (-np.log(u)) ** (1 / params.k)


def tas_select(envelopes, n_rx, m_tx):
    """1-based transmit antenna maximizing the EGC envelope (lowest index on ties).

    ``envelopes`` is the ``N x M`` matrix of branch envelopes.
    """
    env = np.asarray(envelopes, dtype=float)
    if env.shape != (n_rx, m_tx):
        raise DomainError(f"expected a {n_rx}x{m_tx} envelope matrix, got shape {env.shape}")
    # squaring is monotone on sums of nonnegative envelopes
    return int(np.argmax(env.sum(axis=0))) + 1


def snr_realization(ctx, selected_envelopes):
    """Instantaneous SNR of ``ctx``'s user for the envelopes of the chosen antenna."""
    env = np.asarray(selected_envelopes, dtype=float)
    if env.shape != (ctx.config.n_rx,):
        raise DomainError(f"expected {ctx.config.n_rx} envelopes, got shape {env.shape}")
    if np.any(env < 0):
        raise DomainError("envelopes must be nonnegative")
    return float(chi_from_psi(ctx, math.fsum(env)))


def simulate_snr(ctx, count, rng):
    """``count`` independent SNR samples of ``ctx``'s user."""
    n, m = ctx.config.n_rx, ctx.config.m_tx
    env = sample_weibull(ctx.params, rng, (count, n, m))
    # np.max over column sums is the envelope of the TAS-selected column
    psi = env.sum(axis=1).max(axis=1)
    return chi_from_psi(ctx, psi)


@dataclass(frozen=True)
class SimulationPlan:
    """Realization count, seed and chunking of one simulation."""

    ctx: LinkContext
    realizations: int
    seed: int = 0
    chunk_size: int = DEFAULT_CHUNK

    def __post_init__(self):
        for name in ("realizations", "chunk_size"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise DomainError(f"{name} must be an integer >= 1, got {v!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) \
                or not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        object.__setattr__(self, "chunk_size", int(min(self.chunk_size, self.realizations)))

    def chunks(self):
        """(index, size) of every chunk."""
        full, rest = divmod(self.realizations, self.chunk_size)
        sizes = [self.chunk_size] * full + ([rest] if rest else [])
        return list(enumerate(sizes))


@dataclass(frozen=True)
class SimulationResult:
    """Monte-Carlo estimates and their standard errors."""

    op_estimate: float
    op_stderr: float
    aber_estimate: float
    aber_stderr: float
    samples: int
    outages: int = 0
    max_snr: float = 0.0

    def op_interval(self, z=2.5758293035489004):
        """Normal-approximation binomial interval (default 99%)."""
        half = z * self.op_stderr
        return max(0.0, self.op_estimate - half), min(1.0, self.op_estimate + half)


def _chunk(ctx, seed, index, size, gamma, mod_a):
    rng = np.random.default_rng([seed, index])
    chi = simulate_snr(ctx, size, rng)
    cond = 0.5 * _erfc(np.sqrt(mod_a * chi))
    return (
        int(np.count_nonzero(chi <= gamma)),
        math.fsum(cond),
        math.fsum(cond * cond),
        float(chi.max()),
    )


def run(plan, gamma, mod_a, workers=1):
    """Simulate ``plan`` and estimate outage at ``gamma`` and the ABER for ``mod_a``.

    Parameters
    ----------
    plan : SimulationPlan
    gamma : float
        Linear SNR threshold, ``>= 0``.
    mod_a : float
        Modulation constant ``A > 0`` in ``erfc(sqrt(A chi)) / 2``.
    workers : int
        Threads used to run chunks; does not change the result.

    Returns
    -------
    SimulationResult
    """
    if not (math.isfinite(gamma) and gamma >= 0):
        raise DomainError(f"gamma must be finite and >= 0, got {gamma!r}")
    if not (math.isfinite(mod_a) and mod_a > 0):
        raise DomainError(f"mod_a must be finite and > 0, got {mod_a!r}")
    jobs = plan.chunks()

    def work(job):
        return _chunk(plan.ctx, plan.seed, job[0], job[1], gamma, mod_a)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(job) for job in jobs]
    n = plan.realizations
    outages = sum(p[0] for p in parts)
    s1 = math.fsum(p[1] for p in parts)
    s2 = math.fsum(p[2] for p in parts)
    op = outages / n
    aber = s1 / n
    var = max(0.0, s2 / n - aber * aber) * n / (n - 1) if n > 1 else 0.0
    return SimulationResult(
        op_estimate=op,
        op_stderr=math.sqrt(op * (1 - op) / n),
        aber_estimate=aber,
        aber_stderr=math.sqrt(var / n),
        samples=n,
        outages=outages,
        max_snr=max(p[3] for p in parts),
    )

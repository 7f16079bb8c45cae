"""Closed-form latency: priority M/G/1, approximate M/G/2, residual-time bounds.

The single-server results are the two-class non-preemptive Pollaczek-Khinchine
means plus a half-slot frame-alignment term. The two-server results combine
the Kimura GI/G/s mean-wait approximation (on the aggregate service mixture)
with the Bondi observation that the priority/FCFS wait ratio carries over
from one server to several. The residual-time model gives the coupled vs
decoupled (min of two servers) CDF and the resulting two-way cycle time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .traffic import (
    SaturationError,
    TrafficConfig,
    long_service_moments,
    short_service_moments,
    utilization,
)

__all__ = [
    "SojournPrediction",
    "ResidualModel",
    "CycleTimeModel",
    "mg1_priority_sojourn",
    "mg1_priority_sojourn_slotted",
    "kimura_wait",
    "mg2_priority_sojourn",
    "mg2_priority_sojourn_printed",
    "residual_cdf",
    "cycle_time_stats",
]


@dataclass(frozen=True)
class SojournPrediction:
    """Mean sojourn per class, split into wait + transmission + alignment."""

    wait_short: float
    wait_long: float
    service_short: float
    service_long: float
    alignment: float  # half a slot, identical for both classes

    def __post_init__(self) -> None:
        for name in ("wait_short", "wait_long", "service_short", "service_long", "alignment"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def mean_short(self) -> float:
        return self.wait_short + self.service_short + self.alignment

    @property
    def mean_long(self) -> float:
        return self.wait_long + self.service_long + self.alignment


def _moments(config: TrafficConfig):
    e_s, e_s2 = short_service_moments(config)
    e_l, e_l2 = long_service_moments(config.channel, config.table)
    rho, rho_s, rho_l = utilization(config)
    return e_s, e_s2, e_l, e_l2, rho, rho_s


def mg1_priority_sojourn(config: TrafficConfig) -> SojournPrediction:
    """Mean sojourn in the coupled (single-server) system.

    Two-class non-preemptive priority M/G/1: the residual-work numerator
    lam_L*E[S_L^2] + lam_S*E[S_S^2] is shared, the short class divides by
    (1 - rho_S), the long class additionally by (1 - rho). Slot alignment
    adds half a short TTI to both classes.
    """
    e_s, e_s2, e_l, e_l2, rho, rho_s = _moments(config)
    residual_work = config.lambda_long * e_l2 + config.lambda_short * e_s2
    wait_short = residual_work / (2.0 * (1.0 - rho_s))
    wait_long = residual_work / (2.0 * (1.0 - rho) * (1.0 - rho_s))
    return SojournPrediction(
        wait_short=wait_short,
        wait_long=wait_long,
        service_short=e_s,
        service_long=e_l,
        alignment=e_s / 2.0,
    )


def mg1_priority_sojourn_slotted(config: TrafficConfig) -> SojournPrediction:
    """Boundary-exact mean sojourn for the slotted single-server system.

    :func:`mg1_priority_sojourn` applies the continuous-time priority result
    and adds half a slot for frame alignment, which double counts the partial
    slot of the packet in service: once a packet is aligned to a boundary,
    the in-service long packet of D slots can only present residuals
    D-1, ..., 1 there. Working per boundary gives, in slot units,

        w_S = (l_S + l_L * E[D(D-1)]) / (2 (1 - rho_S))
        w_L = (l_L E[D(D-1)]/2 + rho_L/2 + l_S (1 + w_S)) / (1 - rho)

    which the simulator reproduces to statistical accuracy; the continuous
    form overestimates the short class by rho_L/(2(1-rho_S)) and
    underestimates the long class by rho_S/(2(1-rho_S)).
    """
    e_s, _, e_l, e_l2, rho, rho_s = _moments(config)
    slot = config.slot
    ls = config.lambda_short * slot
    ll = config.lambda_long * slot
    ed = e_l / slot
    ed2 = e_l2 / slot**2
    rho_l = rho - rho_s
    w_s = (ls + ll * (ed2 - ed)) / (2.0 * (1.0 - rho_s))
    w_l = (ll * (ed2 - ed) / 2.0 + rho_l / 2.0 + ls * (1.0 + w_s)) / (1.0 - rho)
    return SojournPrediction(
        wait_short=w_s * slot,
        wait_long=w_l * slot,
        service_short=e_s,
        service_long=e_l,
        alignment=e_s / 2.0,
    )


def kimura_wait(s: int, rho: float, mean_service: float, scv: float) -> float:
    """Approximate GI/G/s mean queueing wait.

    (1 + C^2)/2 * rho^(sqrt(2(s+1)) - 1) / (s * mu * (1 - rho)) with
    1/mu = mean_service and C^2 the squared coefficient of variation of the
    service time. Exact for M/M/1; at s=1 it reduces algebraically to the
    Pollaczek-Khinchine wait.
    """
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    if rho >= 1.0:
        raise SaturationError(f"utilization {rho:.6g} >= 1")
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    if scv < 0:
        raise ValueError(f"scv must be >= 0, got {scv}")
    if rho == 0.0:
        return 0.0
    exponent = math.sqrt(2.0 * (s + 1)) - 1.0
    return (1.0 + scv) / 2.0 * rho**exponent * mean_service / (s * (1.0 - rho))


def mg2_priority_sojourn(config: TrafficConfig) -> SojournPrediction:
    """Mean sojourn in the decoupled (two-server) system, approximated.

    The two queues feed both servers; doubling the traffic over two servers
    keeps the per-server utilization of `config`. FCFS wait from the Kimura
    s=2 formula applied to the aggregate short/long service mixture, then the
    Bondi ratio maps it to the two priority classes:
    short x (1-rho)/(1-rho_S), long x 1/(1-rho_S).
    """
    e_s, e_s2, e_l, e_l2, rho, rho_s = _moments(config)
    lam = config.lambda_short + config.lambda_long
    if lam == 0.0:
        return SojournPrediction(0.0, 0.0, e_s, e_l, e_s / 2.0)
    mix_mean = (config.lambda_short * e_s + config.lambda_long * e_l) / lam
    mix_second = (config.lambda_short * e_s2 + config.lambda_long * e_l2) / lam
    scv = mix_second / mix_mean**2 - 1.0
    wait_fcfs = kimura_wait(2, rho, mix_mean, scv)
    return SojournPrediction(
        wait_short=wait_fcfs * (1.0 - rho) / (1.0 - rho_s),
        wait_long=wait_fcfs / (1.0 - rho_s),
        service_short=e_s,
        service_long=e_l,
        alignment=e_s / 2.0,
    )


def mg2_priority_sojourn_printed(config: TrafficConfig) -> SojournPrediction:
    """Diagnostic variant of the two-server approximation.

    Normalizes the aggregate-load factor by the squared total load and the
    long-class service rate instead of the mixture rate:
    wait = num/denom^2 * rho^(sqrt(6)-1) * E[S_L] / (4 (1-rho_S)) for the
    short class (long class divides by (1-rho) as well). Exceeds
    :func:`mg2_priority_sojourn` by exactly E[S_L]/rho; kept for comparison
    only, not used by the CLI or the acceptance checks.
    """
    e_s, e_s2, e_l, e_l2, rho, rho_s = _moments(config)
    if config.lambda_short + config.lambda_long == 0.0:
        return SojournPrediction(0.0, 0.0, e_s, e_l, e_s / 2.0)
    num = config.lambda_long * e_l2 + config.lambda_short * e_s2
    denom = config.lambda_long * e_l + config.lambda_short * e_s
    factor = num / denom**2 * rho ** (math.sqrt(6.0) - 1.0) * e_l / 4.0
    return SojournPrediction(
        wait_short=factor / (1.0 - rho_s),
        wait_long=factor / ((1.0 - rho) * (1.0 - rho_s)),
        service_short=e_s,
        service_long=e_l,
        alignment=e_s / 2.0,
    )


# ---------------------------------------------------------------------------
# Residual time of the server(s) seen by a top-priority two-way device
# ---------------------------------------------------------------------------

_FAMILIES = ("exponential", "truncated-exponential", "uniform", "empirical")


@dataclass(frozen=True)
class ResidualModel:
    """Per-server residual-time distribution on (0, S_L).

    Families: plain `exponential` (rate), `truncated-exponential` (rate,
    renormalized on (0, s_long_max)), `uniform` on (0, s_long_max), and
    `empirical` (resampled from a fixed sample set).
    """

    family: str
    s_long_max: float
    rate: float | None = None
    samples: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {_FAMILIES}")
        if not self.s_long_max > 0:
            raise ValueError("s_long_max must be > 0")
        if self.family in ("exponential", "truncated-exponential"):
            if self.rate is None or not self.rate > 0:
                raise ValueError(f"{self.family} family needs a positive rate")
        if self.family == "empirical":
            if not self.samples:
                raise ValueError("empirical family needs a non-empty sample set")
            object.__setattr__(self, "samples", tuple(float(x) for x in self.samples))
            if any(x < 0 for x in self.samples):
                raise ValueError("residual samples must be >= 0")

    @classmethod
    def exponential(cls, rate: float, s_long_max: float) -> "ResidualModel":
        return cls("exponential", s_long_max, rate=rate)

    @classmethod
    def truncated_exponential(cls, rate: float, s_long_max: float) -> "ResidualModel":
        return cls("truncated-exponential", s_long_max, rate=rate)

    @classmethod
    def uniform(cls, s_long_max: float) -> "ResidualModel":
        return cls("uniform", s_long_max)

    @classmethod
    def empirical(cls, samples, s_long_max: float | None = None) -> "ResidualModel":
        samples = tuple(float(x) for x in samples)
        if s_long_max is None:
            s_long_max = max(max(samples), 1e-12) if samples else 1.0
        return cls("empirical", s_long_max, samples=samples)

    def cdf(self, y):
        """Single-server residual CDF F_X evaluated at y (scalar or array)."""
        y = np.asarray(y, dtype=float)
        if self.family == "exponential":
            out = 1.0 - np.exp(-self.rate * np.maximum(y, 0.0))
        elif self.family == "truncated-exponential":
            norm = 1.0 - math.exp(-self.rate * self.s_long_max)
            out = (1.0 - np.exp(-self.rate * np.clip(y, 0.0, self.s_long_max))) / norm
        elif self.family == "uniform":
            out = np.clip(y / self.s_long_max, 0.0, 1.0)
        else:  # empirical
            xs = np.sort(np.asarray(self.samples))
            out = np.searchsorted(xs, y, side="right") / len(xs)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw residuals via inverse CDF on uniforms from the passed stream."""
        u = rng.random(size)
        if self.family == "exponential":
            return -np.log1p(-u) / self.rate
        if self.family == "truncated-exponential":
            norm = 1.0 - math.exp(-self.rate * self.s_long_max)
            return -np.log1p(-u * norm) / self.rate
        if self.family == "uniform":
            return u * self.s_long_max
        xs = np.asarray(self.samples)
        return xs[(u * len(xs)).astype(np.int64)]


def residual_cdf(model: ResidualModel, y, decoupled: bool):
    """Residual-time CDF seen by the device.

    Coupled access waits out one server's residual, F_X(y). Decoupled access
    takes the faster of two independent servers, 1 - (1 - F_X(y))^2; for the
    exponential family this is 1 - exp(-2*rate*y).
    """
    f = model.cdf(y)
    if not decoupled:
        return f
    g = 1.0 - (1.0 - np.asarray(f)) ** 2
    return g if g.ndim else float(g)


@dataclass(frozen=True)
class CycleTimeModel:
    """Round trip of a top-priority interactive device.

    One cycle = outbound TTI + inbound TTI + processing gap, each direction
    first waiting out the residual time of the serving side.
    """

    s_short: float
    t_proc: float
    residual: ResidualModel
    decoupled: bool

    def __post_init__(self) -> None:
        if not self.s_short > 0:
            raise ValueError("s_short must be > 0")
        if self.t_proc < 0:
            raise ValueError("t_proc must be >= 0")


def cycle_time_stats(
    model: CycleTimeModel, n_samples: int, rng: np.random.Generator
) -> tuple[float, np.ndarray]:
    """Monte Carlo cycle times: 2*S_S + t_proc + residual per direction.

    The two directions of one cycle draw independent residuals; decoupled
    access replaces each draw with the min of two independent server draws.
    Returns (mean, samples).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if model.decoupled:
        res_a = model.residual.sample(rng, (n_samples, 2)).min(axis=1)
        res_b = model.residual.sample(rng, (n_samples, 2)).min(axis=1)
    else:
        res_a = model.residual.sample(rng, n_samples)
        res_b = model.residual.sample(rng, n_samples)
    samples = 2.0 * model.s_short + model.t_proc + res_a + res_b
    return float(samples.mean()), samples

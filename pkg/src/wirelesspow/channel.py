"""Block delivery probability over a QPSK link with Rayleigh fading and ARQ.

A block of ``packets_per_block`` packets, each ``bits_per_packet`` bits long,
is delivered when every packet gets through within ``max_attempts``
transmissions. The fade amplitude h is Rayleigh with scale sigma, so the
instantaneous per-bit SNR is ``h**2 * SINR`` with mean ``2 sigma**2 SINR``.

Two fading models are supported:

``"fast"`` (default)
    Independent fade per bit. Bit errors are i.i.d. with the fading-averaged
    BER, which has a closed form.
``"block"``
    One fade per packet transmission attempt. The per-attempt packet success
    probability is averaged over the fade numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

FADING_MODELS = ("fast", "block")


@dataclass(frozen=True)
class LinkParams:
    sinr_db: float = 45.0
    rayleigh_scale: float = 0.5
    bits_per_packet: int = 8000
    packets_per_block: int = 1000
    max_attempts: int = 3
    fading: str = "fast"

    def __post_init__(self):
        if math.isnan(self.sinr_db) or self.sinr_db == math.inf:
            raise ValueError("sinr_db must be finite or -inf")
        if not self.rayleigh_scale > 0:
            raise ValueError("rayleigh_scale must be positive")
        for name in ("bits_per_packet", "packets_per_block", "max_attempts"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.fading not in FADING_MODELS:
            raise ValueError(f"fading must be one of {FADING_MODELS}")

    @property
    def sinr_linear(self) -> float:
        return 10.0 ** (self.sinr_db / 10.0)

    @property
    def mean_snr(self) -> float:
        """Average per-bit SNR, E[h^2] * SINR."""
        return 2.0 * self.rayleigh_scale**2 * self.sinr_linear


@dataclass(frozen=True)
class LinkReliability:
    avg_ber: float
    packet_success: float
    packet_delivery: float
    block_delivery: float

    @property
    def q_c(self) -> float:
        return self.block_delivery


def instantaneous_ber(snr_linear):
    """Gray-coded QPSK bit error probability at a fixed SNR: Qfunc(sqrt(2 snr)).

    Accepts scalars or arrays.
    """
    snr = np.asarray(snr_linear, dtype=float)
    if np.any(snr < 0) or np.any(np.isnan(snr)):
        raise ValueError("invalid snr")
    ber = 0.5 * special.erfc(np.sqrt(snr))
    return float(ber) if ber.ndim == 0 else ber


def _closed_form_ber(mean_snr: float) -> float:
    # 1/2 (1 - sqrt(g/(1+g))) rewritten to avoid cancellation at high SNR
    if mean_snr == 0:
        return 0.5
    root = math.sqrt(mean_snr / (1.0 + mean_snr))
    return 0.5 / ((1.0 + mean_snr) * (1.0 + root))


def average_ber(link: LinkParams) -> float:
    """Fading-averaged BER, ``0.5 * (1 - sqrt(g / (1 + g)))`` with g = mean SNR."""
    return _closed_form_ber(link.mean_snr)


def _fade_average(fn, mean_snr: float) -> float:
    """E[fn(X)] for X ~ Exponential(mean_snr), where fn decays to 0 quickly in X.

    The instantaneous SNR h^2 * SINR is exponential when h is Rayleigh.
    """
    if mean_snr == 0:
        return float(fn(0.0))

    # integrate over u = x / mean_snr ~ Exponential(1)
    def integrand(u):
        return fn(mean_snr * u) * math.exp(-u)

    # e^-u underflows past 745; erfc(sqrt(x)) < e^-x, so fn is negligible past x = 800
    upper = min(745.0, 800.0 / mean_snr)
    x_edges = (1.0, 5.0, 20.0, 60.0)
    u_edges = (1.0, 5.0, 20.0, 60.0)
    edges = sorted({0.0, upper} | {e / mean_snr for e in x_edges if e / mean_snr < upper}
                   | {e for e in u_edges if e < upper})
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        value, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-12, limit=200)
        total += value
    return total


def fade_averaged_ber(link: LinkParams) -> float:
    """Same quantity as :func:`average_ber`, by numerical quadrature over the fade."""
    return _fade_average(lambda x: 0.5 * math.erfc(math.sqrt(x)), link.mean_snr)


def _packet_failure_once(ber: float, bits: int) -> float:
    return -math.expm1(bits * math.log1p(-ber))


def attempt_success_prob(link: LinkParams) -> float:
    """Probability that one transmission of one packet arrives error-free."""
    bits = link.bits_per_packet
    if link.fading == "fast":
        return 1.0 - _packet_failure_once(average_ber(link), bits)
    fail = _fade_average(lambda x: _packet_failure_once(0.5 * math.erfc(math.sqrt(x)), bits), link.mean_snr)
    return min(1.0, max(0.0, 1.0 - fail))


def block_delivery_prob(link: LinkParams) -> LinkReliability:
    """Closed-form reliability chain from BER to the block delivery probability q_c."""
    ber = average_ber(link)
    success = attempt_success_prob(link)
    residual = (1.0 - success) ** link.max_attempts
    delivery = 1.0 - residual
    block = math.exp(link.packets_per_block * math.log1p(-residual)) if residual < 1 else 0.0
    return LinkReliability(ber, success, delivery, block)


def q_c(link: LinkParams) -> float:
    return block_delivery_prob(link).block_delivery


def _attempt_successes(link: LinkParams, rng: np.random.Generator, shape) -> np.ndarray:
    if link.fading == "fast":
        # per-bit fades are i.i.d., so each attempt's error count is binomial
        p_bit = fade_averaged_ber(link)
        errors = rng.binomial(link.bits_per_packet, p_bit, size=shape)
        return errors == 0
    h = rng.rayleigh(link.rayleigh_scale, size=shape)
    ber = instantaneous_ber(h * h * link.sinr_linear)
    p_success = np.exp(link.bits_per_packet * np.log1p(-ber))
    return rng.random(shape) < p_success


def _summarize(ok: np.ndarray, attempts: int) -> tuple[np.ndarray, np.ndarray]:
    """Reduce an (n, K, A) success array to per-block delivery and attempts used."""
    packet_ok = ok.any(axis=2)
    per_packet = np.where(packet_ok, ok.argmax(axis=2) + 1, attempts)
    delivered = packet_ok.all(axis=1)
    # abort at the first packet that exhausts its attempts
    first_bad = np.where(delivered, ok.shape[1], (~packet_ok).argmax(axis=1) + 1)
    cum = np.cumsum(per_packet, axis=1)
    used = cum[np.arange(ok.shape[0]), first_bad - 1]
    return delivered, used


def simulate_block_deliveries(
    link: LinkParams, n_blocks: int, rng: np.random.Generator, chunk: int = 128
) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo transmission of ``n_blocks`` blocks.

    Returns boolean ``delivered`` and integer ``attempts_used`` arrays.
    """
    delivered = np.empty(n_blocks, dtype=bool)
    used = np.empty(n_blocks, dtype=np.int64)
    shape_tail = (link.packets_per_block, link.max_attempts)
    for start in range(0, n_blocks, chunk):
        stop = min(start + chunk, n_blocks)
        ok = _attempt_successes(link, rng, (stop - start,) + shape_tail)
        delivered[start:stop], used[start:stop] = _summarize(ok, link.max_attempts)
    return delivered, used


def simulate_block_delivery(link: LinkParams, rng: np.random.Generator) -> tuple[bool, int]:
    """Transmit one block packet by packet; returns ``(delivered, attempts_used)``."""
    delivered, used = simulate_block_deliveries(link, 1, rng)
    return bool(delivered[0]), int(used[0])

"""Downlink precoding and spectral-efficiency evaluation.

The activation vector n in {0..N}^L selects, per O-RU, how many antennas
transmit (contiguous prefix of each RU's array).  All active antennas form
one collective array with block-diagonal selection D, and every UE is
served by centralized MMSE precoding computed from MMSE channel estimates.

SE is a channel-hardening bound evaluated by Monte-Carlo over the paired
realization batch of a ChannelRealizationSet, so competing activation
vectors see common random numbers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealizationSet
from .powermodel import PowerBreakdown, total_power
from .scenario import ConfigurationError, Scenario


class InfeasibleActivationError(RuntimeError):
    """Raised when an operation needs at least one active antenna."""


@dataclass
class PrecodingSolution:
    """Normalized precoders plus the statistics behind the power allocation.

    W is (S, L*N, K) with ensemble power E||w_k||^2 = rho_k; ru_share is
    (L, K), each column summing to 1 over RUs, giving RU l's share of UE k's
    radiated power.
    """

    W: np.ndarray
    rho: np.ndarray
    omega: np.ndarray
    norm_sq: np.ndarray
    ru_share: np.ndarray

    @property
    def rho_ru(self) -> np.ndarray:
        """(L,) radiated watt per RU."""
        return self.ru_share @ self.rho


@dataclass
class EvaluationResult:
    """Per-UE SE outcome of one activation vector on one realization batch."""

    se: np.ndarray
    sinr: np.ndarray
    r_vio: float
    power: PowerBreakdown


def check_activation(n: np.ndarray, n_ru: int, n_ant: int) -> np.ndarray:
    n = np.asarray(n, dtype=int)
    if n.shape != (n_ru,):
        raise ConfigurationError(
            f"activation vector must have shape ({n_ru},), got {n.shape}"
        )
    if (n < 0).any() or (n > n_ant).any():
        raise ConfigurationError(f"activation entries must lie in 0..{n_ant}")
    return n


def activation_mask(n: np.ndarray, n_ant: int) -> np.ndarray:
    """(L*N,) 0/1 diagonal of the selection matrix D; first n_l antennas on."""
    n = np.asarray(n, dtype=int)
    return (np.arange(n_ant)[None, :] < n[:, None]).astype(float).ravel()


def mmse_precoder(
    H_hat: np.ndarray,
    C: np.ndarray,
    mask: np.ndarray,
    uplink_power_w: float,
    noise_power_w: float,
) -> np.ndarray:
    """Unnormalized centralized MMSE precoders for one realization.

    H_hat is (L*N, K) estimated channels, C the (K, L, N, N) error
    covariances, mask the (L*N,) selection diagonal.  Returns (L*N, K)

        w_k = p * (sum_i p*D*(h_i h_i^H + C_i)*D + sigma2*I)^-1 * D*h_k,

    exactly zero on masked antennas.
    """
    out = _batched_precoder(H_hat[None], C, mask, uplink_power_w, noise_power_w)
    return out[0]


def _error_cov_diag(C: np.ndarray) -> np.ndarray:
    """(L*N, L*N) block diagonal of sum_i C_i (block per RU)."""
    K, L, N, _ = C.shape
    total = C.sum(axis=0)  # (L, N, N)
    out = np.zeros((L * N, L * N), dtype=complex)
    for l in range(L):
        out[l * N : (l + 1) * N, l * N : (l + 1) * N] = total[l]
    return out


def _batched_precoder(H_hat, C, mask, p, sigma2):
    """(S, L*N, K) unnormalized MMSE precoders over a realization batch."""
    S, LN, K = H_hat.shape
    act = np.flatnonzero(mask > 0)
    if act.size == 0:
        raise InfeasibleActivationError("no active antennas")
    Hh = H_hat[:, act, :]
    csum = _error_cov_diag(C)[np.ix_(act, act)]
    A = p * np.einsum("sak,sbk->sab", Hh, Hh.conj()) + p * csum + sigma2 * np.eye(act.size)
    W = np.zeros((S, LN, K), dtype=complex)
    W[:, act, :] = p * np.linalg.solve(A, Hh)
    return W


def fractional_power_allocation(
    beta: np.ndarray,
    omega: np.ndarray,
    rho_max_w: float,
    upsilon: float,
    kappa: float,
) -> np.ndarray:
    """Fractional downlink power allocation over UEs.

        rho_k = rho_max * (sum_l beta_kl)^upsilon * omega_k^-kappa
                / sum_i (sum_l beta_il)^upsilon * omega_i^(1-kappa)

    omega_k is the largest per-RU share of UE k's precoder norm, so the
    denominator upper-bounds every RU's load and the worst-case RU respects
    rho_max.
    """
    omega = np.asarray(omega, dtype=float)
    if (omega <= 0).any() or not np.isfinite(omega).all():
        raise InfeasibleActivationError("power allocation needs positive precoder statistics")
    gain = np.asarray(beta, dtype=float).sum(axis=1) ** upsilon
    den = float((gain * omega ** (1.0 - kappa)).sum())
    return rho_max_w * gain * omega ** (-kappa) / den


def precode(
    chset: ChannelRealizationSet, n: np.ndarray, scenario: Scenario
) -> PrecodingSolution:
    """Precoders and power allocation for activation n on a realization batch."""
    n = check_activation(n, scenario.n_ru, scenario.n_ant)
    mask = activation_mask(n, scenario.n_ant)
    Wbar = _batched_precoder(
        chset.H_hat, chset.C, mask, scenario.pilot_power_w, scenario.noise_power_w
    )
    S, LN, K = Wbar.shape
    per_ru = Wbar.reshape(S, scenario.n_ru, scenario.n_ant, K)
    sq_rl = np.einsum("slnk,slnk->slk", per_ru, per_ru.conj()).real  # (S, L, K)
    mean_sq_rl = sq_rl.mean(axis=0)                                  # E||w_kl||^2
    norm_sq = mean_sq_rl.sum(axis=0)                                 # E||w_k||^2
    if scenario.omega_squared:
        omega = (mean_sq_rl / norm_sq).max(axis=0)
    else:
        mean_norm_rl = np.sqrt(sq_rl).mean(axis=0)                   # E||w_kl||
        mean_norm = np.sqrt(sq_rl.sum(axis=1)).mean(axis=0)          # E||w_k||
        omega = (mean_norm_rl / mean_norm).max(axis=0)
    rho = fractional_power_allocation(
        chset.beta, omega, scenario.rho_max_w, scenario.upsilon, scenario.kappa
    )
    ru_share = mean_sq_rl / norm_sq
    W = Wbar * np.sqrt(rho / norm_sq)
    return PrecodingSolution(W=W, rho=rho, omega=omega, norm_sq=norm_sq, ru_share=ru_share)


def evaluate(
    chset: ChannelRealizationSet,
    n: np.ndarray,
    scenario: Scenario,
    se_min: float,
) -> EvaluationResult:
    """Hardening-bound SE per UE for activation n, plus the power breakdown.

    SINR_k = |E{h_k^H w_k}|^2
             / (sum_i E{|h_k^H w_i|^2} - |E{h_k^H w_k}|^2 + sigma2)

    with expectations over the batch.  The all-zero activation is a valid
    no-transmission state: SE = 0 for every UE and r_vio = 1.
    """
    n = check_activation(n, scenario.n_ru, scenario.n_ant)
    K = chset.n_ue
    if n.sum() == 0:
        power = total_power(scenario, n, None, se_min)
        return EvaluationResult(
            se=np.zeros(K), sinr=np.zeros(K), r_vio=1.0, power=power
        )
    sol = precode(chset, n, scenario)
    G = np.einsum("snk,sni->ski", chset.H.conj(), sol.W)  # G[s,k,i] = h_k^H w_i
    desired = np.einsum("skk->sk", G).mean(axis=0)
    num = np.abs(desired) ** 2
    den = (np.abs(G) ** 2).mean(axis=0).sum(axis=1) - num + scenario.noise_power_w
    sinr = num / den
    se = scenario.prelog * np.log2(1.0 + sinr)
    r_vio = float(np.mean(se < se_min))
    power = total_power(scenario, n, sol.rho_ru, se_min)
    return EvaluationResult(se=se, sinr=sinr, r_vio=r_vio, power=power)

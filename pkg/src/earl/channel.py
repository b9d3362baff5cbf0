"""Uplink training: pilot assignment, channel realizations, MMSE estimation.

Channels are correlated Rayleigh, h_kl ~ CN(0, R_kl), stacked per UE into
(L*N,) collective vectors.  A ChannelRealizationSet holds S paired
realizations of true channels and their MMSE estimates so that competing
activation vectors can be evaluated on common random numbers.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import (
    ConfigurationError,
    Deployment,
    Scenario,
    correlation_tensor,
    gain_matrix,
)


@dataclass
class ChannelRealizationSet:
    """Paired true/estimated channel realizations plus their statistics.

    Shapes: R, B, C are (K, L, N, N); beta is (K, L); H and H_hat are
    (S, L*N, K); pilot_index is (K,).
    """

    R: np.ndarray
    beta: np.ndarray
    pilot_index: np.ndarray
    H: np.ndarray
    H_hat: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def n_realizations(self) -> int:
        return self.H.shape[0]

    @property
    def n_ue(self) -> int:
        return self.beta.shape[0]


def assign_pilots(beta: np.ndarray, tau_p: int) -> np.ndarray:
    """Assign pilot indices to UEs.

    With K <= tau_p every UE gets its own pilot.  Otherwise the first tau_p
    UEs take distinct pilots and each remaining UE joins the pilot whose
    current members have the least summed gain sum_l sum_{i in pilot} beta_il,
    which greedily limits pilot contamination.
    """
    K = beta.shape[0]
    pilots = np.empty(K, dtype=int)
    pilots[: min(K, tau_p)] = np.arange(min(K, tau_p))
    if K <= tau_p:
        return pilots
    load = np.array([beta[t].sum() for t in range(tau_p)])
    for k in range(tau_p, K):
        t = int(np.argmin(load))
        pilots[k] = t
        load[t] += beta[k].sum()
    return pilots


def _sqrtm_psd(R: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root; small negative eigenvalues are clipped."""
    vals, vecs = np.linalg.eigh(R)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def draw_true_channels(R: np.ndarray, n_realizations: int, seed: int) -> np.ndarray:
    """Draw (S, L*N, K) correlated Rayleigh channels from the (K,L,N,N) tensor."""
    K, L, N, _ = R.shape
    rng = np.random.default_rng(seed)
    H = np.empty((n_realizations, L * N, K), dtype=complex)
    for k in range(K):
        for l in range(L):
            g = rng.standard_normal((n_realizations, N)) + 1j * rng.standard_normal(
                (n_realizations, N)
            )
            g /= np.sqrt(2.0)
            H[:, l * N : (l + 1) * N, k] = g @ _sqrtm_psd(R[k, l]).T
    return H


def mmse_estimate(
    R: np.ndarray,
    pilot_index: np.ndarray,
    pilot_power_w: float,
    tau_p: int,
    noise_power_w: float,
    H: np.ndarray,
    seed: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """MMSE channel estimation from uplink pilots.

    Per RU l and pilot t the despread observation is
        y_tl = sqrt(p*tau_p) * sum_{i in pilot t} h_il + n_tl,
    with fresh noise n_tl ~ CN(0, sigma2*I) per realization, and

        h_hat_kl = sqrt(p*tau_p) * R_kl * Psi_tl^-1 * y_tl,
        Psi_tl   = sum_{i in pilot t} p*tau_p*R_il + sigma2*I.

    Returns (H_hat, B, C) where B_kl = p*tau_p*R_kl*Psi_tl^-1*R_kl is the
    estimate covariance and C = R - B the error covariance.
    """
    K, L, N, _ = R.shape
    S = H.shape[0]
    q = pilot_power_w * tau_p
    rng = np.random.default_rng(seed)
    H_hat = np.empty_like(H)
    B = np.empty_like(R)
    C = np.empty_like(R)
    eye = np.eye(N)
    for l in range(L):
        blk = slice(l * N, (l + 1) * N)
        for t in np.unique(pilot_index):
            members = np.flatnonzero(pilot_index == t)
            psi = q * R[members, l].sum(axis=0) + noise_power_w * eye
            noise = (
                rng.standard_normal((S, N)) + 1j * rng.standard_normal((S, N))
            ) * np.sqrt(noise_power_w / 2.0)
            y = np.sqrt(q) * H[:, blk, :][:, :, members].sum(axis=2) + noise
            z = np.linalg.solve(psi, y.T)  # (N, S) = Psi^-1 y^T
            for k in members:
                H_hat[:, blk, k] = (np.sqrt(q) * R[k, l] @ z).T
                B[k, l] = q * R[k, l] @ np.linalg.solve(psi, R[k, l])
                C[k, l] = R[k, l] - B[k, l]
    return H_hat, B, C


def generate_channel_set(
    scenario: Scenario,
    deployment: Deployment,
    n_realizations: int,
    seed: int,
) -> ChannelRealizationSet:
    """Build statistics and draw a paired realization batch for one deployment."""
    ss = np.random.SeedSequence(seed)
    shadow_seed, draw_seed, noise_seed = [int(s.generate_state(1)[0]) for s in ss.spawn(3)]
    beta = gain_matrix(scenario, deployment, np.random.default_rng(shadow_seed))
    R = correlation_tensor(scenario, deployment, beta=beta)
    pilots = assign_pilots(beta, scenario.tau_p)
    H = draw_true_channels(R, n_realizations, draw_seed)
    H_hat, B, C = mmse_estimate(
        R, pilots, scenario.pilot_power_w, scenario.tau_p,
        scenario.noise_power_w, H, noise_seed,
    )
    return ChannelRealizationSet(
        R=R, beta=beta, pilot_index=pilots, H=H, H_hat=H_hat, B=B, C=C
    )


_MAGIC = b"EARLCHS\x01"


def dump_channel_set(chset: ChannelRealizationSet, path: str | Path):
    """Serialize a realization set: versioned header + row-major complex64."""
    K, L, N, _ = chset.R.shape
    S = chset.n_realizations
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<4I", K, L, N, S))
        fh.write(chset.beta.astype("<f8").tobytes(order="C"))
        fh.write(chset.pilot_index.astype("<i4").tobytes(order="C"))
        for arr in (chset.R, chset.H, chset.H_hat, chset.B, chset.C):
            fh.write(arr.astype("<c8").tobytes(order="C"))


def load_channel_set(path: str | Path) -> ChannelRealizationSet:
    raw = Path(path).read_bytes()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise ConfigurationError(f"{path}: not a channel realization dump")
    off = len(_MAGIC)
    K, L, N, S = struct.unpack_from("<4I", raw, off)
    off += 16

    def take(shape, dtype):
        nonlocal off
        arr = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape)), offset=off)
        off += arr.nbytes
        return arr.reshape(shape)

    beta = take((K, L), "<f8").astype(float)
    pilots = take((K,), "<i4").astype(int)
    R = take((K, L, N, N), "<c8").astype(complex)
    H = take((S, L * N, K), "<c8").astype(complex)
    H_hat = take((S, L * N, K), "<c8").astype(complex)
    B = take((K, L, N, N), "<c8").astype(complex)
    C = take((K, L, N, N), "<c8").astype(complex)
    return ChannelRealizationSet(
        R=R, beta=beta, pilot_index=pilots, H=H, H_hat=H_hat, B=B, C=C
    )

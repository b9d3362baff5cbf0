"""Gain-proportional antenna allocation heuristic.

Distributes the total antenna budget L*N across O-RUs according to how
much each RU contributes to each UE's aggregate channel gain.  Runs in
O(L*K) and does not depend on the SE threshold.
"""
from __future__ import annotations

import numpy as np

from .scenario import ConfigurationError

WEIGHT_MODES = ("linear", "shifted_db", "db_magnitude")


def _weights(beta_db: np.ndarray, mode: str) -> np.ndarray:
    """Positive gain weights from (L, K) dB-scale channel gains.

    The raw dB values are negative, so a sign convention is needed before
    forming proportional shares:

    - "linear": back to linear scale, g = 10^(beta_db/10).  Shares follow
      the physical gain ratios; invariant to a common dB offset.
    - "shifted_db": g = beta_db - min(beta_db) + 1.  Keeps dB compression
      (allocations spread much flatter across RUs).
    - "db_magnitude": g = |beta_db|.  Note this ranks weak channels above
      strong ones; kept for comparison only.
    """
    if mode == "linear":
        return 10.0 ** (beta_db / 10.0)
    if mode == "shifted_db":
        return beta_db - beta_db.min() + 1.0
    if mode == "db_magnitude":
        return np.abs(beta_db)
    raise ConfigurationError(f"unknown weight mode {mode!r}; pick from {WEIGHT_MODES}")


def heuristic_allocate(
    beta_db: np.ndarray,
    n_ant: int,
    alpha: float = 1.0,
    weights: str = "linear",
) -> np.ndarray:
    """Allocate antennas per RU proportionally to channel-gain weights.

    beta_db is (L, K): large-scale gains in dB between every RU and UE.
    Per UE k the network-level weight is v_k = ||g_k||_alpha normalized over
    UEs, and the per-RU split is g_lk / sum_l' g_l'k; RU l then receives

        n_l = min(N, floor(sum_k v_k * g_lk / sum_l' g_l'k * L * N)).
    """
    beta_db = np.asarray(beta_db, dtype=float)
    if beta_db.ndim != 2:
        raise ConfigurationError("beta_db must be a 2-D (L, K) array")
    if not np.isfinite(beta_db).all():
        raise ConfigurationError("beta_db contains non-finite entries")
    L, K = beta_db.shape
    g = _weights(beta_db, weights)
    if (g <= 0).all():
        raise ConfigurationError("gain weights are all zero")
    ue_norm = (g**alpha).sum(axis=0) ** (1.0 / alpha)
    v = ue_norm / ue_norm.sum()
    v_tilde = g / g.sum(axis=0, keepdims=True)
    share = v_tilde @ v
    return np.minimum(n_ant, np.floor(share * L * n_ant)).astype(int)

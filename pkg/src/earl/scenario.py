"""Network scenario: geometry, propagation model, and system constants.

A Scenario bundles everything that stays fixed while controllers search over
antenna activations: the service area, the O-RU grid, the TDD frame split,
transmit power budgets, and the hardware/power constants of the functional
split under study.  Scenarios are immutable; variations are made with
dataclasses.replace or by loading a JSON file where any subset of keys
overrides the defaults.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np

RU_HEIGHT_M = 10.0   # vertical offset between O-RU and UE antennas
MIN_DIST_M = 1.0     # path-loss distance floor


class ConfigurationError(ValueError):
    """Raised for structurally invalid scenario configurations."""


class Split(str, Enum):
    """Functional split between O-RU and O-Cloud processing."""

    SPLIT8 = "8"      # all PHY processing centralized in the O-Cloud
    SPLIT71 = "7.1"   # time-domain stages (filtering, DFT) stay at the O-RU


def thermal_noise_w(bandwidth_hz: float, noise_figure_db: float = 7.0) -> float:
    """Receiver noise power in watt: -174 dBm/Hz + 10*log10(B) + NF."""
    noise_dbm = -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db
    return 10.0 ** (noise_dbm / 10.0) * 1e-3


@dataclass(frozen=True)
class PowerConstants:
    """Hardware power/compute constants of the end-to-end power model."""

    p_st_w: float = 6.8              # static radio power per active antenna [W]
    delta_tr: float = 4.0            # transmit-chain slope (radiated -> consumed)
    p_proc_ru0_w: float = 74.0       # idle baseband processing power per active O-RU [W]
    p_idle_cloud_w: float = 20.8     # idle processing power of the O-Cloud pool [W]
    p_fixed_cloud_w: float = 120.0   # fixed O-Cloud overhead (site, distribution) [W]
    c_ru_max: float = 360.0          # O-RU processor efficiency [GOPS/W]
    c_cloud_max: float = 360.0       # O-Cloud processor efficiency [GOPS/W]
    p_opt_w: float = 1.8             # optical fronthaul transceiver per active O-RU [W]
    p_olt_w: float = 20.0            # fronthaul aggregation (OLT) baseline [W]
    delta_ptp: float = 4.6           # fronthaul power slope per fh_ref_gbps of traffic [W]
    sigma_cool: float = 0.9          # cooling efficiency divisor on processing terms
    fh_ref_gbps: float = 0.75        # traffic unit for the delta_ptp slope [Gbit/s]
    iq_bits: int = 16                # bits per I or Q component on the fronthaul


@dataclass(frozen=True)
class Scenario:
    """Immutable description of one cell-free deployment problem.

    Defaults describe a 400 m x 400 m area with a 4x4 grid of 8-antenna
    O-RUs jointly serving K single-antenna UEs over 20 MHz.
    """

    area_side_m: float = 400.0
    n_ru: int = 16                   # L, number of O-RUs (must form a square grid)
    n_ant: int = 8                   # N, antennas per O-RU
    n_ue: int = 4                    # K, single-antenna UEs
    tau_c: int = 192                 # TDD frame length [samples]
    tau_p: int = 6                   # pilot length [samples]
    bandwidth_hz: float = 20e6
    sampling_rate_hz: float = 30.72e6
    n_dft: int = 2048
    n_used: int = 1200               # occupied subcarriers
    symbol_duration_s: float = 71.4e-6
    pilot_power_w: float = 0.1       # uplink pilot power p, all UEs
    rho_max_w: float = 0.2           # per-RU downlink radiated power budget
    upsilon: float = -0.5            # fractional allocation gain exponent
    kappa: float = 0.5               # fractional allocation precoder exponent
    asd_deg: float = 15.0            # angular standard deviation of local scattering
    shadow_std_db: float = 0.0       # log-normal shadow fading std; 0 disables
    omega_squared: bool = False      # use squared-norm statistic in the allocation
    noise_power_w: float | None = None   # None -> thermal noise at NF 7 dB
    split: Split = Split.SPLIT8
    power: PowerConstants = field(default_factory=PowerConstants)
    seed: int = 0

    def __post_init__(self):
        if self.noise_power_w is None:
            object.__setattr__(self, "noise_power_w", thermal_noise_w(self.bandwidth_hz))
        if not isinstance(self.split, Split):
            object.__setattr__(self, "split", Split(str(self.split)))
        self.validate()

    def validate(self):
        if self.n_ru < 1 or self.n_ant < 1 or self.n_ue < 1:
            raise ConfigurationError("n_ru, n_ant and n_ue must be positive")
        if not 0 < self.tau_p <= self.tau_c:
            raise ConfigurationError("need 0 < tau_p <= tau_c")
        if self.pilot_power_w < 0 or self.rho_max_w <= 0:
            raise ConfigurationError("power budgets must be non-negative")
        if self.noise_power_w is not None and self.noise_power_w <= 0:
            raise ConfigurationError("noise power must be positive")
        if self.area_side_m <= 0:
            raise ConfigurationError("area_side_m must be positive")

    @property
    def tau_d(self) -> int:
        """Downlink data samples per frame."""
        return self.tau_c - self.tau_p

    @property
    def prelog(self) -> float:
        """SE pre-log factor (downlink fraction of the frame)."""
        return self.tau_d / self.tau_c

    @property
    def total_antennas(self) -> int:
        return self.n_ru * self.n_ant


def _constants_from_dict(raw: dict) -> PowerConstants:
    known = {f.name for f in fields(PowerConstants)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown power constant keys: {sorted(unknown)}")
    return PowerConstants(**raw)


def load_scenario(path: str | Path) -> Scenario:
    """Load a Scenario from a JSON file; unspecified keys keep their defaults."""
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ConfigurationError("scenario file must contain a JSON object")
    if "power" in raw:
        raw["power"] = _constants_from_dict(raw.pop("power"))
    if "split" in raw:
        raw["split"] = Split(str(raw["split"]))
    known = {f.name for f in fields(Scenario)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")
    return Scenario(**raw)


def save_scenario(scenario: Scenario, path: str | Path):
    out = {}
    for f in fields(Scenario):
        v = getattr(scenario, f.name)
        if f.name == "power":
            v = {pf.name: getattr(v, pf.name) for pf in fields(PowerConstants)}
        elif f.name == "split":
            v = v.value
        out[f.name] = v
    Path(path).write_text(json.dumps(out, indent=2) + "\n")


@dataclass(frozen=True)
class Deployment:
    """O-RU grid and UE drop for one scenario instance."""

    ru_pos: np.ndarray   # (L, 2) metres
    ue_pos: np.ndarray   # (K, 2) metres


def build_deployment(scenario: Scenario, seed: int | None = None) -> Deployment:
    """Place O-RUs on a uniform grid and drop UEs uniformly at random.

    Square RU counts give the usual square lattice; other counts fall back
    to the closest rows x cols rectangle, filled row-major.
    """
    rows = math.isqrt(scenario.n_ru)
    cols = math.ceil(scenario.n_ru / rows)
    xs = (np.arange(cols) + 0.5) * scenario.area_side_m / cols
    ys = (np.arange(rows) + 0.5) * scenario.area_side_m / rows
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    ru_pos = np.column_stack([xx.ravel(), yy.ravel()])[: scenario.n_ru]
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    ue_pos = rng.uniform(0.0, scenario.area_side_m, size=(scenario.n_ue, 2))
    return Deployment(ru_pos=ru_pos, ue_pos=ue_pos)


def large_scale_gain(ru_pos: np.ndarray, ue_pos: np.ndarray) -> float | np.ndarray:
    """Distance-based channel gain (linear scale).

    beta_dB = -30.5 - 36.7 log10(d) with d the 3-D distance including the
    RU mounting height; d is floored at MIN_DIST_M.
    """
    ru_pos = np.asarray(ru_pos, dtype=float)
    ue_pos = np.asarray(ue_pos, dtype=float)
    horiz = np.linalg.norm(ru_pos - ue_pos, axis=-1)
    d = np.sqrt(horiz**2 + RU_HEIGHT_M**2)
    d = np.maximum(d, MIN_DIST_M)
    return 10.0 ** ((-30.5 - 36.7 * np.log10(d)) / 10.0)


def gain_matrix(
    scenario: Scenario, deployment: Deployment, rng: np.random.Generator | None = None
) -> np.ndarray:
    """(K, L) matrix of large-scale gains, with optional log-normal shadowing."""
    beta = large_scale_gain(deployment.ru_pos[None, :, :], deployment.ue_pos[:, None, :])
    if scenario.shadow_std_db > 0.0:
        if rng is None:
            rng = np.random.default_rng(scenario.seed)
        shadow = rng.normal(0.0, scenario.shadow_std_db, size=beta.shape)
        beta = beta * 10.0 ** (shadow / 10.0)
    return beta


def spatial_correlation(
    ru_pos: np.ndarray,
    ue_pos: np.ndarray,
    scenario: Scenario,
    beta: float | None = None,
) -> np.ndarray:
    """(N, N) spatial correlation matrix for one RU-UE pair.

    Gaussian local scattering around the nominal bearing phi for a
    half-wavelength ULA:

        R[m, n] = beta * exp(j*pi*(m-n)*sin(phi))
                       * exp(-asd^2 * pi^2 / 2 * (m-n)^2 * cos(phi)^2)

    with the angular standard deviation asd in radians.  The diagonal is
    exactly beta, so trace(R) = N * beta.
    """
    if beta is None:
        beta = float(large_scale_gain(ru_pos, ue_pos))
    phi = math.atan2(ue_pos[1] - ru_pos[1], ue_pos[0] - ru_pos[0])
    asd = math.radians(scenario.asd_deg)
    delta = np.subtract.outer(np.arange(scenario.n_ant), np.arange(scenario.n_ant))
    phase = np.exp(1j * np.pi * delta * math.sin(phi))
    spread = np.exp(-0.5 * (asd * np.pi * delta * math.cos(phi)) ** 2)
    return beta * phase * spread


def correlation_tensor(
    scenario: Scenario, deployment: Deployment, beta: np.ndarray | None = None
) -> np.ndarray:
    """(K, L, N, N) correlation matrices for every UE-RU pair."""
    if beta is None:
        beta = gain_matrix(scenario, deployment)
    K, L, N = scenario.n_ue, scenario.n_ru, scenario.n_ant
    R = np.empty((K, L, N, N), dtype=complex)
    for k in range(K):
        for l in range(L):
            R[k, l] = spatial_correlation(
                deployment.ru_pos[l], deployment.ue_pos[k], scenario, beta=float(beta[k, l])
            )
    return R

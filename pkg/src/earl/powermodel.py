"""End-to-end power model for O-RAN functional splits 8 and 7.1.

Consumption is accounted in five parts: RU radio (static per-antenna power
plus the transmit-chain share of radiated power), RU baseband processing,
RU-side fronthaul optics, O-Cloud processing, and cloud-side fronthaul.
Processing power is GOPS-based: each baseband function contributes a
per-unit GOPS figure scaled by its multiplicity, and GOPS convert to watt
through processor efficiency and a cooling divisor.

Split 8 runs every function in the O-Cloud and ships time-domain IQ over
the fronthaul; split 7.1 keeps filtering and the DFT at the O-RU and ships
frequency-domain IQ (occupied subcarriers only).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, Split

GOPS_FUNCTIONS = ("filter", "dft", "map", "prec", "mod", "cod", "netw")
# functions that stay at the O-RU under split 7.1
_SPLIT71_RU = ("filter", "dft")


@dataclass(frozen=True)
class GopsReport:
    """Per-function GOPS per RU and their split-dependent placement.

    Every array is (L,): total GOPS contributed by that function for RU l's
    signal path, regardless of where it executes.  ru_total places the
    RU-resident share, cloud_total the centralized share.
    """

    filter: np.ndarray
    dft: np.ndarray
    map: np.ndarray
    prec: np.ndarray
    mod: np.ndarray
    cod: np.ndarray
    netw: np.ndarray
    ru_total: np.ndarray
    cloud_total: float

    def per_function(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in GOPS_FUNCTIONS}

    @property
    def grand_total(self) -> float:
        return float(self.ru_total.sum() + self.cloud_total)


@dataclass(frozen=True)
class PowerBreakdown:
    """Network power consumption in watt, split by subsystem."""

    p_ru_radio_w: float
    p_ru_proc_w: float
    p_fh_ru_w: float
    p_cloud_w: float
    p_fh_cloud_w: float
    p_total_w: float


def _unit_gops(scenario: Scenario, se_target: float) -> dict[str, float]:
    """Per-unit GOPS of each baseband function.

    w_r is bandwidth relative to 20 MHz; se_r is the target SE relative to
    6 bit/s/Hz.  Units scale as: filter and dft per antenna, map and cod per
    served UE, prec per antenna-UE pair, mod per antenna, netw per active RU.
    """
    w_r = scenario.bandwidth_hz / 20e6
    se_r = se_target / 6.0
    t_giga = scenario.symbol_duration_s * 1e9
    return {
        "filter": 40.0 * scenario.sampling_rate_hz / 1e9,
        "dft": 8.0 * scenario.n_dft * math.log2(scenario.n_dft) / t_giga,
        "map": 1.3 * w_r * se_r**1.5,
        "prec": 8.0 * scenario.tau_d * scenario.n_used / (t_giga * scenario.tau_c),
        "mod": 1.3 * w_r,
        "cod": 5.2 * w_r * se_r,
        "netw": 8.0 * w_r * se_r,
    }


def gops(scenario: Scenario, n: np.ndarray, se_target: float) -> GopsReport:
    """GOPS ledger for activation vector n at the given target SE.

    All UEs are served by every active RU, so the served count per active
    RU is K.  Deactivated RUs (n_l = 0) contribute nothing.
    """
    n = np.asarray(n, dtype=int)
    u = _unit_gops(scenario, se_target)
    K = scenario.n_ue
    active = (n > 0).astype(float)
    served = K * active
    per_fn = {
        "filter": u["filter"] * n,
        "dft": u["dft"] * n,
        "map": u["map"] * served,
        "prec": u["prec"] * n * served,
        "mod": u["mod"] * n,
        "cod": u["cod"] * served,
        "netw": u["netw"] * active,
    }
    if scenario.split is Split.SPLIT71:
        ru_total = sum(per_fn[f] for f in _SPLIT71_RU)
        cloud_total = sum(per_fn[f].sum() for f in GOPS_FUNCTIONS if f not in _SPLIT71_RU)
    else:
        ru_total = np.zeros(scenario.n_ru)
        cloud_total = sum(per_fn[f].sum() for f in GOPS_FUNCTIONS)
    return GopsReport(ru_total=ru_total, cloud_total=float(cloud_total), **per_fn)


def _ru_power_parts(scenario, n, rho_ru, report) -> tuple[np.ndarray, np.ndarray]:
    """(L,) radio watt and (L,) processing watt; deactivated RUs consume 0."""
    n = np.asarray(n, dtype=float)
    rho_ru = np.zeros(scenario.n_ru) if rho_ru is None else np.asarray(rho_ru, dtype=float)
    pc = scenario.power
    active = n > 0
    radio = np.where(active, n * pc.p_st_w + pc.delta_tr * rho_ru, 0.0)
    if scenario.split is Split.SPLIT71:
        proc = np.where(
            active, (pc.p_proc_ru0_w + report.ru_total / pc.c_ru_max) / pc.sigma_cool, 0.0
        )
    else:
        proc = np.zeros(scenario.n_ru)
    return radio, proc


def ru_power(
    scenario: Scenario, n: np.ndarray, rho_ru: np.ndarray, se_target: float
) -> np.ndarray:
    """(L,) RU power: static radio + transmit chain + split-7.1 processing.

    rho_ru is each RU's share of the total radiated power in watt.  A
    deactivated RU consumes nothing.
    """
    report = gops(scenario, n, se_target)
    radio, proc = _ru_power_parts(scenario, n, rho_ru, report)
    return radio + proc


def cloud_power(scenario: Scenario, report: GopsReport) -> float:
    """O-Cloud power: fixed overhead + idle pool + GOPS-proportional load."""
    pc = scenario.power
    return pc.p_fixed_cloud_w + (pc.p_idle_cloud_w + report.cloud_total / pc.c_cloud_max) / pc.sigma_cool


def fronthaul_traffic_gbps(scenario: Scenario, n: np.ndarray) -> float:
    """Aggregate fronthaul IQ traffic in Gbit/s for activation vector n.

    Split 8 carries full-rate time-domain IQ per antenna; split 7.1 carries
    frequency-domain IQ so the rate scales by the occupied-subcarrier
    fraction n_used/n_dft.
    """
    n = np.asarray(n, dtype=float)
    bits_per_sample = 2.0 * scenario.power.iq_bits
    rate = n.sum() * scenario.sampling_rate_hz * bits_per_sample
    if scenario.split is Split.SPLIT71:
        rate *= scenario.n_used / scenario.n_dft
    return rate / 1e9


def fronthaul_power(scenario: Scenario, n: np.ndarray) -> tuple[np.ndarray, float]:
    """(per-RU optics watt, cloud-side fronthaul watt)."""
    n = np.asarray(n, dtype=int)
    pc = scenario.power
    per_ru = pc.p_opt_w * (n > 0).astype(float)
    traffic = fronthaul_traffic_gbps(scenario, n)
    cloud_side = (pc.p_olt_w + pc.delta_ptp * traffic / pc.fh_ref_gbps) / pc.sigma_cool
    return per_ru, cloud_side


def total_power(
    scenario: Scenario,
    n: np.ndarray,
    rho_ru: np.ndarray | None,
    se_target: float,
) -> PowerBreakdown:
    """Full network power for activation n; rho_ru may be None for zero load."""
    n = np.asarray(n, dtype=int)
    report = gops(scenario, n, se_target)
    radio, proc = _ru_power_parts(scenario, n, rho_ru, report)
    fh_ru, fh_cloud = fronthaul_power(scenario, n)
    parts = (
        float(radio.sum()),
        float(proc.sum()),
        float(fh_ru.sum()),
        cloud_power(scenario, report),
        fh_cloud,
    )
    return PowerBreakdown(*parts, p_total_w=float(sum(parts)))


def objective_coefficients(scenario: Scenario, se_target: float) -> tuple[float, float]:
    """Per-RU and per-antenna cost coefficients (c0, c1) of the activation
    objective c0*||n||_0 + c1*||n||_1.

    c0 collects costs paid once per active RU, c1 costs paid per active
    antenna; processing GOPS convert to watt through the split-dependent
    processor efficiency and cooling.
    """
    u = _unit_gops(scenario, se_target)
    pc = scenario.power
    K = scenario.n_ue
    chi = 1.0 if scenario.split is Split.SPLIT71 else 0.0
    cloud_den = pc.c_cloud_max * pc.sigma_cool
    c0 = (u["netw"] + K * u["cod"]) / cloud_den + pc.p_proc_ru0_w + pc.p_opt_w
    c1 = (
        pc.p_st_w
        + (u["mod"] + K * u["prec"] + (1.0 - chi) * (u["filter"] + u["dft"])) / cloud_den
        + chi * (u["filter"] + u["dft"]) / pc.c_ru_max
    )
    return c0, c1


def objective_value(c0: float, c1: float, n: np.ndarray) -> float:
    n = np.asarray(n)
    return c0 * float(np.count_nonzero(n)) + c1 * float(n.sum())

"""LoRa physical layer: time on air, log-distance path loss, delivery.

Path loss is ``PL(d) = PL(1 m) + 10 n log10(d)``. The exponent ``n`` is
normally obtained with :func:`calibrate_exponent` from one measured
(distance, RSSI) pair; the 1 m reference loss defaults to free space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError


def free_space_loss_db(distance_m: float, frequency_hz: float) -> float:
    """Friis free-space path loss in dB."""
    return 20 * math.log10(distance_m) + 20 * math.log10(frequency_hz) - 147.55


DEFAULT_FREQUENCY_HZ = 923e6
REFERENCE_LOSS_923MHZ = free_space_loss_db(1.0, DEFAULT_FREQUENCY_HZ)


@dataclass(frozen=True)
class LoraConfig:
    spreading_factor: int = 7
    bandwidth_hz: float = 125_000.0
    coding_rate_denom: int = 5
    frequency_hz: float = DEFAULT_FREQUENCY_HZ
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    low_data_rate_opt: bool = False

    def __post_init__(self):
        if not 6 <= self.spreading_factor <= 12:
            raise ValidationError(f"spreading factor {self.spreading_factor} not in 6..12")
        if not 5 <= self.coding_rate_denom <= 8:
            raise ValidationError(f"coding rate 4/{self.coding_rate_denom} not in 4/5..4/8")
        if self.bandwidth_hz <= 0:
            raise ValidationError("bandwidth must be positive")
        if self.preamble_symbols < 0:
            raise ValidationError("preamble length must be non-negative")

    @property
    def symbol_time(self) -> float:
        return 2 ** self.spreading_factor / self.bandwidth_hz


@dataclass(frozen=True)
class LinkBudget:
    tx_power_dbm: float = 20.0
    tx_antenna_gain_dbi: float = 18.0
    rx_antenna_gain_dbi: float = 0.0
    rx_sensitivity_dbm: float = -120.0
    path_loss_exponent: float = 2.0
    reference_loss_db: float = REFERENCE_LOSS_923MHZ
    shadowing_sigma_db: float = 0.0

    def __post_init__(self):
        if self.rx_sensitivity_dbm >= 0:
            raise ValidationError("receiver sensitivity must be negative dBm")
        if not 1.5 <= self.path_loss_exponent <= 6.0:
            raise ValidationError(f"path loss exponent {self.path_loss_exponent} not in [1.5, 6]")
        if self.shadowing_sigma_db < 0:
            raise ValidationError("shadowing sigma must be non-negative")

    @property
    def eirp_plus_rx_gain(self) -> float:
        return self.tx_power_dbm + self.tx_antenna_gain_dbi + self.rx_antenna_gain_dbi


def payload_symbols(cfg: LoraConfig, payload_bytes: int) -> int:
    if not 0 <= payload_bytes <= 255:
        raise ValidationError(f"payload of {payload_bytes} bytes not in 0..255")
    sf = cfg.spreading_factor
    de = 1 if cfg.low_data_rate_opt else 0
    ih = 0 if cfg.explicit_header else 1
    crc = 1 if cfg.crc_on else 0
    num = 8 * payload_bytes - 4 * sf + 28 + 16 * crc - 20 * ih
    blocks = math.ceil(num / (4 * (sf - 2 * de)))
    return 8 + max(blocks * cfg.coding_rate_denom, 0)


def airtime(cfg: LoraConfig, payload_bytes: int) -> float:
    """Time on air in seconds (Semtech SX127x datasheet model)."""
    n_payload = payload_symbols(cfg, payload_bytes)
    return (cfg.preamble_symbols + 4.25 + n_payload) * cfg.symbol_time


def path_loss(link: LinkBudget, distance: float) -> float:
    return link.reference_loss_db + 10 * link.path_loss_exponent * math.log10(distance)


def rssi_at(link: LinkBudget, distance: float) -> float:
    """Mean received power in dBm at ``distance`` meters (>= 1 m)."""
    if not distance >= 1.0:
        raise ValidationError(f"distance must be >= 1 m, got {distance}")
    return link.eirp_plus_rx_gain - path_loss(link, distance)


def calibrate_exponent(link: LinkBudget, distance: float, rssi_dbm: float) -> float:
    """Solve ``rssi_at(link, distance) == rssi_dbm`` for the path loss exponent.

    ``link.path_loss_exponent`` is ignored.
    """
    if not distance > 1.0:
        raise ValidationError("calibration distance must exceed the 1 m reference")
    excess = link.eirp_plus_rx_gain - link.reference_loss_db - rssi_dbm
    n = excess / (10 * math.log10(distance))
    if n <= 0:
        raise ValidationError(
            f"observed {rssi_dbm} dBm at {distance} m is stronger than the 1 m reference allows"
        )
    return n


def calibrated(link: LinkBudget, distance: float, rssi_dbm: float) -> LinkBudget:
    return replace(link, path_loss_exponent=calibrate_exponent(link, distance, rssi_dbm))


def max_range(link: LinkBudget) -> float:
    """Largest distance whose mean RSSI still meets the receiver sensitivity."""
    margin = link.eirp_plus_rx_gain - link.reference_loss_db - link.rx_sensitivity_dbm
    if margin < 0:
        return 1.0 if margin == 0 else 0.0
    return 10 ** (margin / (10 * link.path_loss_exponent))


def delivered(link: LinkBudget, cfg: LoraConfig, distance: float,
              rng: np.random.Generator | None = None) -> bool:
    """Threshold decision, with optional log-normal shadowing from ``rng``.

    ``cfg`` is accepted for interface symmetry; the sensitivity in ``link``
    is assumed to already match its spreading factor.
    """
    rssi = rssi_at(link, max(distance, 1.0))
    if link.shadowing_sigma_db > 0:
        if rng is None:
            raise ValidationError("shadowing requires an rng")
        rssi += rng.normal(0.0, link.shadowing_sigma_db)
    return rssi >= link.rx_sensitivity_dbm


def range_table(link: LinkBudget, distances) -> list[tuple[float, float, bool]]:
    """(distance_m, rssi_dbm, delivered) rows for the deterministic link."""
    mean_link = replace(link, shadowing_sigma_db=0.0)
    return [(float(d), rssi_at(mean_link, d), delivered(mean_link, LoraConfig(), d))
            for d in distances]

"""Downlink rate and QoE-driven bandwidth requirements."""
import logging

import numpy as np

from stackmarket.core.exceptions import NonPositiveBase, ZeroExponentDenominator
from stackmarket.models.scenario import QoeTargets, RadioLink

logger = logging.getLogger(__name__)


def spectral_efficiency(link: RadioLink) -> float:
    """log2(1 + SNR) in bit/s/Hz"""
    return float(np.log2(1.0 + link.snr))


def downlink_rate(s: float, link: RadioLink) -> float:
    """Shannon rate of s MHz over the link, in Mbit/s"""
    return s * spectral_efficiency(link)


def _exponent_denominator(qoe: QoeTargets) -> float:
    _, _, k3, k4 = qoe.kappa
    denom = k3 + k4 * qoe.rotation_speed
    if denom == 0:
        raise ZeroExponentDenominator(f"k3 + k4*v vanishes at v={qoe.rotation_speed}")
    return denom


def min_bitrate_ssim(qoe: QoeTargets) -> float:
    """Bitrate needed to reach the SSIM target at the stored rotation speed"""
    k1, k2, _, _ = qoe.kappa
    scale = k1 + k2 * qoe.rotation_speed
    if scale == 0:
        raise NonPositiveBase("k1 + k2*v vanishes")
    base = (1.0 - qoe.ssim_target) / scale
    if base <= 0:
        raise NonPositiveBase(f"SSIM base {base} is not positive")
    return float(base ** (-1.0 / _exponent_denominator(qoe)))


def min_bitrate_vmaf(qoe: QoeTargets) -> float:
    """Bitrate needed to reach the VMAF target, floored at 0"""
    k1, k2, _, _ = qoe.kappa
    rate = (qoe.vmaf_target - k1 - k2 * qoe.rotation_speed) / _exponent_denominator(qoe)
    return max(rate, 0.0)


def min_bandwidth(qoe: QoeTargets, link: RadioLink) -> float:
    """Smallest bandwidth (MHz) meeting both quality targets over the link"""
    efficiency = spectral_efficiency(link)
    if efficiency <= 0:
        raise NonPositiveBase("link spectral efficiency is not positive")
    required = max(min_bitrate_ssim(qoe), min_bitrate_vmaf(qoe))
    return required / efficiency

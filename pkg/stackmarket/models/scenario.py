from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class RadioLink(BaseModel):
    """Downlink constants between one MSP and one user"""
    model_config = ConfigDict(frozen=True)

    tx_power: float = Field(..., gt=0, description="Transmit power (W)")
    ref_gain_h0: float = Field(..., gt=0, description="Power gain at the 1 m reference distance")
    distance: float = Field(..., gt=0, description="MSP-to-user distance (m)")
    path_loss_exp: float = Field(..., gt=0, description="Path loss exponent")
    noise_psd: float = Field(..., gt=0, description="Noise power spectral density (W/Hz)")

    @property
    def snr(self) -> float:
        return self.tx_power * self.ref_gain_h0 * self.distance ** (-self.path_loss_exp) / self.noise_psd


class QoeTargets(BaseModel):
    """Video quality targets and the coefficients of the bitrate estimators.

    The estimator denominators are checked by the bitrate operations themselves so
    that they can raise their own typed errors.
    """
    model_config = ConfigDict(frozen=True)

    ssim_target: float = Field(..., ge=0, lt=1, description="Target SSIM")
    vmaf_target: float = Field(..., ge=0, le=100, description="Target VMAF")
    rotation_speed: float = Field(..., ge=0, description="Head rotation speed (deg/s)")
    kappa: Tuple[float, float, float, float] = Field(..., description="Estimator coefficients k1..k4")


class UserProfile(BaseModel):
    """A follower: latency sensitivity and bandwidth demand range"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    alpha: float = Field(..., gt=0, description="Latency sensitivity")
    s_min: float = Field(..., ge=0, description="Minimum bandwidth when served (MHz)")
    s_max: float = Field(..., description="Maximum useful bandwidth (MHz)")
    qoe: Optional[QoeTargets] = Field(None, description="Quality targets used to derive s_min")
    link_per_msp: Optional[List[RadioLink]] = Field(
        None, alias="link", description="One downlink per MSP"
    )

    @model_validator(mode="after")
    def check_demand(self) -> "UserProfile":
        if not self.s_max > self.s_min:
            raise ValueError(f"s_max ({self.s_max}) must exceed s_min ({self.s_min})")
        return self


class MspProfile(BaseModel):
    """A leader: link quality, price cap and bandwidth capacity"""
    model_config = ConfigDict(frozen=True)

    quality: float = Field(..., gt=0, le=1, description="Link quality q")
    p_max: float = Field(..., gt=0, description="Price cap per MHz")
    capacity: Optional[float] = Field(None, ge=0, description="Capacity in MHz, None for unbounded")


class Scenario(BaseModel):
    """Immutable market instance"""
    model_config = ConfigDict(frozen=True)

    users: List[UserProfile] = Field(..., min_length=1, description="Followers")
    msps: List[MspProfile] = Field(..., min_length=1, description="Leaders")
    seed: int = Field(0, ge=0, description="Seed the scenario was drawn with")

    @model_validator(mode="after")
    def check_links(self) -> "Scenario":
        for i, user in enumerate(self.users):
            if user.link_per_msp is not None and len(user.link_per_msp) != len(self.msps):
                raise ValueError(
                    f"user {i} has {len(user.link_per_msp)} links for {len(self.msps)} MSPs"
                )
        return self

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_msps(self) -> int:
        return len(self.msps)


class ScenarioRanges(BaseModel):
    """Uniform draw bounds for generated scenarios"""
    model_config = ConfigDict(frozen=True)

    alpha: Tuple[float, float] = Field((0.0, 1.0), description="Latency sensitivity range")
    s_min: Tuple[float, float] = Field((1.0, 5.0), description="Minimum bandwidth range (MHz)")
    s_max: Tuple[float, float] = Field((10.0, 12.0), description="Maximum bandwidth range (MHz)")
    quality: Tuple[float, float] = Field((0.0, 1.0), description="MSP quality range")
    capacities: List[float] = Field([20.0, 30.0, 50.0], description="Capacity cycle over MSPs")
    uniform_capacity: Optional[float] = Field(None, description="Overrides the capacity cycle")
    p_max: float = Field(12.0, gt=0, description="Price cap for every MSP")
    margin: float = Field(1e-6, ge=0, description="Excluded band at each range endpoint")

//! Amplitude/phase fusion: min-max normalization, the Δ and Ξ images and
//! their phase-flipped variants, cropping and thresholding.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Channel, ScanImage};
use crate::lockin::wrap_phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// `φ_norm · (1 − R_norm)`
    #[default]
    Delta,
    /// `φ_norm / (R_norm + guard)`
    Xi,
    /// `(1 − φ_norm) · (1 − R_norm)`
    DeltaPrime,
    /// `(1 − φ_norm) / (R_norm + guard)`
    XiPrime,
}

impl FusionMode {
    pub fn channel(self) -> Channel {
        match self {
            FusionMode::Delta => Channel::Delta,
            FusionMode::Xi => Channel::Xi,
            FusionMode::DeltaPrime => Channel::DeltaP,
            FusionMode::XiPrime => Channel::XiP,
        }
    }

    pub fn is_xi(self) -> bool {
        matches!(self, FusionMode::Xi | FusionMode::XiPrime)
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "delta" => Ok(FusionMode::Delta),
            "xi" => Ok(FusionMode::Xi),
            "delta_prime" | "delta_p" => Ok(FusionMode::DeltaPrime),
            "xi_prime" | "xi_p" => Ok(FusionMode::XiPrime),
            _ => Err(Error::InvalidArgument(format!(
                "unknown fusion mode `{s}` (expected delta, xi, delta_prime, xi_prime)"
            ))),
        }
    }
}

pub const DEFAULT_XI_GUARD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub xi_guard: f64,
    pub renormalize_output: bool,
    /// Rotate raw phases so their circular mean is zero before normalizing.
    pub center_phase: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            mode: FusionMode::Delta,
            xi_guard: DEFAULT_XI_GUARD,
            renormalize_output: true,
            center_phase: true,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi_guard >= 0.0) || !self.xi_guard.is_finite() {
            return Err(Error::InvalidArgument(format!("xi_guard must be >= 0, got {}", self.xi_guard)));
        }
        if self.mode.is_xi() && self.xi_guard == 0.0 {
            return Err(Error::InvalidArgument("xi_guard must be > 0 for the xi modes".into()));
        }
        Ok(())
    }
}

fn normalized_channel(c: Channel) -> Channel {
    match c {
        Channel::R => Channel::RNorm,
        Channel::Phi => Channel::PhiNorm,
        other => other,
    }
}

/// `(v − min) / (max − min)`. Fails on non-finite values and on images with
/// fewer than two distinct values.
pub fn minmax_normalize(img: &ScanImage) -> Result<ScanImage> {
    if img.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{} image has non-finite values", img.channel)));
    }
    let (lo, hi) = img.finite_range().ok_or(Error::DegenerateRange)?;
    let span = hi - lo;
    if !(span > 0.0) {
        return Err(Error::DegenerateRange);
    }
    Ok(img.map(normalized_channel(img.channel), |v| (v - lo) / span))
}

/// Rotates all phases by the negated circular mean and rewraps to `(−π, π]`.
/// Phase spreads approaching ±π around the mean still wrap.
pub fn center_phase(phi: &ScanImage) -> ScanImage {
    let (s, c) = phi
        .values
        .iter()
        .fold((0.0, 0.0), |(s, c), p| (s + p.sin(), c + p.cos()));
    let mean = if s == 0.0 && c == 0.0 { 0.0 } else { s.atan2(c) };
    phi.map(phi.channel, |p| wrap_phase(p - mean))
}

fn check_unit(img: &ScanImage, name: &str) -> Result<()> {
    if img.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1]")));
    }
    Ok(())
}

fn check_pair(r_norm: &ScanImage, phi_norm: &ScanImage) -> Result<()> {
    r_norm.check_same_shape(phi_norm)?;
    check_unit(r_norm, "r_norm")?;
    check_unit(phi_norm, "phi_norm")
}

fn flipped(phi_norm: &ScanImage) -> ScanImage {
    phi_norm.map(phi_norm.channel, |p| 1.0 - p)
}

fn delta_values(r_norm: &ScanImage, phi_norm: &ScanImage) -> Vec<f64> {
    phi_norm
        .values
        .iter()
        .zip(&r_norm.values)
        .map(|(p, r)| p * (1.0 - r))
        .collect()
}

fn xi_values(r_norm: &ScanImage, phi_norm: &ScanImage, guard: f64) -> Result<Vec<f64>> {
    if !(guard >= 0.0) || !guard.is_finite() {
        return Err(Error::InvalidArgument(format!("xi guard must be >= 0, got {guard}")));
    }
    if guard == 0.0 && r_norm.values.iter().any(|&r| r <= 0.0) {
        return Err(Error::InvalidArgument("xi guard 0 needs r_norm > 0 everywhere".into()));
    }
    Ok(phi_norm
        .values
        .iter()
        .zip(&r_norm.values)
        .map(|(p, r)| p / (r + guard))
        .collect())
}

pub fn fuse_delta(r_norm: &ScanImage, phi_norm: &ScanImage) -> Result<ScanImage> {
    check_pair(r_norm, phi_norm)?;
    Ok(r_norm.with_values(Channel::Delta, delta_values(r_norm, phi_norm)))
}

pub fn fuse_delta_prime(r_norm: &ScanImage, phi_norm: &ScanImage) -> Result<ScanImage> {
    check_pair(r_norm, phi_norm)?;
    Ok(r_norm.with_values(Channel::DeltaP, delta_values(r_norm, &flipped(phi_norm))))
}

fn finish_xi(img: ScanImage, renormalize: bool) -> Result<ScanImage> {
    if renormalize {
        minmax_normalize(&img)
    } else {
        Ok(img)
    }
}

pub fn fuse_xi(r_norm: &ScanImage, phi_norm: &ScanImage, guard: f64, renormalize: bool) -> Result<ScanImage> {
    check_pair(r_norm, phi_norm)?;
    let v = xi_values(r_norm, phi_norm, guard)?;
    finish_xi(r_norm.with_values(Channel::Xi, v), renormalize)
}

pub fn fuse_xi_prime(r_norm: &ScanImage, phi_norm: &ScanImage, guard: f64, renormalize: bool) -> Result<ScanImage> {
    check_pair(r_norm, phi_norm)?;
    let v = xi_values(r_norm, &flipped(phi_norm), guard)?;
    finish_xi(r_norm.with_values(Channel::XiP, v), renormalize)
}

/// Normalized inputs and the fused output of one fusion run.
#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub r_norm: ScanImage,
    pub phi_norm: ScanImage,
    pub fused: ScanImage,
}

/// Normalizes raw R and φ (optionally centering φ first) and applies `cfg.mode`.
pub fn fuse(r: &ScanImage, phi: &ScanImage, cfg: &FusionConfig) -> Result<Fused> {
    cfg.validate()?;
    r.check_same_shape(phi)?;
    let phi = if cfg.center_phase { center_phase(phi) } else { phi.clone() };
    let r_norm = minmax_normalize(r)?;
    let phi_norm = minmax_normalize(&phi)?;
    let fused = apply_mode(&r_norm, &phi_norm, cfg)?;
    Ok(Fused {
        r_norm,
        phi_norm,
        fused,
    })
}

pub fn apply_mode(r_norm: &ScanImage, phi_norm: &ScanImage, cfg: &FusionConfig) -> Result<ScanImage> {
    match cfg.mode {
        FusionMode::Delta => fuse_delta(r_norm, phi_norm),
        FusionMode::DeltaPrime => fuse_delta_prime(r_norm, phi_norm),
        FusionMode::Xi => fuse_xi(r_norm, phi_norm, cfg.xi_guard, cfg.renormalize_output),
        FusionMode::XiPrime => fuse_xi_prime(r_norm, phi_norm, cfg.xi_guard, cfg.renormalize_output),
    }
}

/// Drops `margin_px` pixels from every side.
pub fn crop_margin(img: &ScanImage, margin_px: usize) -> Result<ScanImage> {
    if 2 * margin_px >= img.nx || 2 * margin_px >= img.ny {
        return Err(Error::InvalidArgument(format!(
            "margin {margin_px} too large for a {}x{} image",
            img.ny, img.nx
        )));
    }
    img.sub_image(margin_px, margin_px, img.nx - 2 * margin_px, img.ny - 2 * margin_px)
}

/// 1 where `img ≥ t`, else 0.
pub fn threshold(img: &ScanImage, t: f64) -> Result<ScanImage> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument("threshold must be finite".into()));
    }
    Ok(img.map(Channel::Mask, |v| if v >= t { 1.0 } else { 0.0 }))
}

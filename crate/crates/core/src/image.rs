//! Scan images: one real channel on an `ny × nx` grid with scan-grid metadata.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "X")]
    X,
    #[serde(rename = "Y")]
    Y,
    #[serde(rename = "R")]
    R,
    #[serde(rename = "PHI")]
    Phi,
    #[serde(rename = "R_NORM")]
    RNorm,
    #[serde(rename = "PHI_NORM")]
    PhiNorm,
    #[serde(rename = "DELTA")]
    Delta,
    #[serde(rename = "XI")]
    Xi,
    #[serde(rename = "DELTA_P")]
    DeltaP,
    #[serde(rename = "XI_P")]
    XiP,
    #[serde(rename = "MASK")]
    Mask,
}

impl Channel {
    pub const ALL: [Channel; 11] = [
        Channel::X,
        Channel::Y,
        Channel::R,
        Channel::Phi,
        Channel::RNorm,
        Channel::PhiNorm,
        Channel::Delta,
        Channel::Xi,
        Channel::DeltaP,
        Channel::XiP,
        Channel::Mask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::X => "X",
            Channel::Y => "Y",
            Channel::R => "R",
            Channel::Phi => "PHI",
            Channel::RNorm => "R_NORM",
            Channel::PhiNorm => "PHI_NORM",
            Channel::Delta => "DELTA",
            Channel::Xi => "XI",
            Channel::DeltaP => "DELTA_P",
            Channel::XiP => "XI_P",
            Channel::Mask => "MASK",
        }
    }

    /// Default value units: lock-in products are in V², phase in rad.
    pub fn units(self) -> &'static str {
        match self {
            Channel::X | Channel::Y | Channel::R => "V^2",
            Channel::Phi => "rad",
            _ => "1",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown channel `{s}`")))
    }
}

/// Position of pixel `(0, 0)` and the pixel pitch, in meters (or arbitrary
/// units for ingested data without a header).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Default for GridMeta {
    fn default() -> Self {
        GridMeta {
            x0: 0.0,
            y0: 0.0,
            dx: 1.0,
            dy: 1.0,
        }
    }
}

/// Row-major image; row `j` holds scan line `y0 + j·dy`, column `i` holds `x0 + i·dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanImage {
    pub channel: Channel,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    pub meta: GridMeta,
    /// Length unit of the grid metadata, `m` for simulated scans.
    pub length_units: String,
}

impl ScanImage {
    pub fn new(channel: Channel, nx: usize, ny: usize, values: Vec<f64>, meta: GridMeta) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument("image dimensions must be >= 1".into()));
        }
        if values.len() != nx * ny {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {ny}x{nx} image",
                values.len()
            )));
        }
        Ok(ScanImage {
            channel,
            nx,
            ny,
            values,
            meta,
            length_units: "m".into(),
        })
    }

    pub fn from_rows(channel: Channel, rows: &[Vec<f64>]) -> Result<Self> {
        let ny = rows.len();
        let nx = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nx) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        let mut img = ScanImage::new(channel, nx, ny, rows.concat(), GridMeta::default())?;
        img.length_units = "arb".into();
        Ok(img)
    }

    /// `(rows, cols)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.nx + i] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.nx..(j + 1) * self.nx]
    }

    pub fn x_of(&self, i: usize) -> f64 {
        self.meta.x0 + i as f64 * self.meta.dx
    }

    pub fn y_of(&self, j: usize) -> f64 {
        self.meta.y0 + j as f64 * self.meta.dy
    }

    pub fn units(&self) -> &'static str {
        self.channel.units()
    }

    pub fn check_same_shape(&self, other: &ScanImage) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dims(self.shape(), other.shape()));
        }
        Ok(())
    }

    /// Same geometry, new channel and values.
    pub fn with_values(&self, channel: Channel, values: Vec<f64>) -> ScanImage {
        debug_assert_eq!(values.len(), self.values.len());
        ScanImage {
            channel,
            nx: self.nx,
            ny: self.ny,
            values,
            meta: self.meta,
            length_units: self.length_units.clone(),
        }
    }

    pub fn map(&self, channel: Channel, f: impl Fn(f64) -> f64) -> ScanImage {
        self.with_values(channel, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Finite minimum and maximum, `None` if no value is finite.
    pub fn finite_range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .filter(|v| v.is_finite())
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    /// First maximum in row-major order, as `(i, j)`.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best % self.nx, best / self.nx)
    }

    pub fn transpose(&self) -> ScanImage {
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.nx {
            for j in 0..self.ny {
                values.push(self.at(i, j));
            }
        }
        ScanImage {
            channel: self.channel,
            nx: self.ny,
            ny: self.nx,
            values,
            meta: GridMeta {
                x0: self.meta.y0,
                y0: self.meta.x0,
                dx: self.meta.dy,
                dy: self.meta.dx,
            },
            length_units: self.length_units.clone(),
        }
    }

    /// Block `[i0, i0+nx) × [j0, j0+ny)` with the origin moved accordingly.
    pub fn sub_image(&self, i0: usize, j0: usize, nx: usize, ny: usize) -> Result<ScanImage> {
        if nx == 0 || ny == 0 || i0 + nx > self.nx || j0 + ny > self.ny {
            return Err(Error::Bounds(format!(
                "block {ny}x{nx} at ({i0}, {j0}) outside {}x{} image",
                self.ny, self.nx
            )));
        }
        let mut values = Vec::with_capacity(nx * ny);
        for j in j0..j0 + ny {
            values.extend_from_slice(&self.row(j)[i0..i0 + nx]);
        }
        Ok(ScanImage {
            channel: self.channel,
            nx,
            ny,
            values,
            meta: GridMeta {
                x0: self.x_of(i0),
                y0: self.y_of(j0),
                ..self.meta
            },
            length_units: self.length_units.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_names_round_trip() {
        for c in Channel::ALL {
            assert_eq!(c.name().parse::<Channel>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.name()));
        }
        assert!("Q".parse::<Channel>().is_err());
    }

    #[test]
    fn indexing_and_transpose() {
        let img = ScanImage::from_rows(Channel::R, &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(img.shape(), (2, 3));
        assert_eq!(img.at(2, 1), 6.0);
        let t = img.transpose();
        assert_eq!(t.shape(), (3, 2));
        assert_eq!(t.at(1, 2), 6.0);
        assert_eq!(t.transpose(), img);
        assert_eq!(img.argmax(), (2, 1));
    }

    #[test]
    fn sub_image_moves_origin() {
        let mut img = ScanImage::new(Channel::R, 4, 3, (0..12).map(f64::from).collect(), GridMeta {
            x0: 1.0,
            y0: 2.0,
            dx: 0.5,
            dy: 0.25,
        })
        .unwrap();
        img.set(1, 1, 100.0);
        let s = img.sub_image(1, 1, 2, 2).unwrap();
        assert_eq!(s.values, vec![100.0, 6.0, 9.0, 10.0]);
        assert_eq!((s.meta.x0, s.meta.y0), (1.5, 2.25));
        assert!(img.sub_image(3, 0, 2, 1).is_err());
    }

    #[test]
    fn mismatched_shapes_name_both() {
        let a = ScanImage::from_rows(Channel::R, &[vec![1.0, 2.0]]).unwrap();
        let b = ScanImage::from_rows(Channel::Phi, &[vec![1.0], vec![2.0]]).unwrap();
        let msg = a.check_same_shape(&b).unwrap_err().to_string();
        assert!(msg.contains("1x2") && msg.contains("2x1"), "{msg}");
    }
}

//! Virtual raster scan: one field solve and lock-in measurement per probe position.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldsolver::{FieldProblem, InducedCharge, SolverConfig};
use crate::geometry::{build_grid, DomainSpec, Probe, SampleSpec};
use crate::image::{Channel, GridMeta, ScanImage};
use crate::io::csv::read_image;
use crate::lockin::{charge_to_voltage, demodulate, synthesize, Demodulation, NoiseModel, ReferenceSignal};

/// Scan grid and measurement-chain settings.
///
/// The lock-in reference is the drive waveform itself: amplitude `v_drive`,
/// phase 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanPlan {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx_points: usize,
    pub ny_points: usize,
    pub lift_off: f64,
    /// Probe main-axis angle from +x, radians.
    pub orientation: f64,
    pub f_in: f64,
    /// Drive amplitude, volts (half the peak-to-peak value).
    pub v_drive: f64,
    /// Charge amplifier gain, V/C.
    pub gain: f64,
    /// Phase added by the amplifier chain, radians. The default π undoes the
    /// inversion of the sensed charge relative to the drive.
    pub extra_phase: f64,
    pub n_periods: usize,
    pub fs: f64,
    /// Base noise model; position `(i, j)` uses seed `seed + j·nx_points + i`.
    pub noise: NoiseModel,
}

impl Default for ScanPlan {
    fn default() -> Self {
        ScanPlan {
            x0: 0.0,
            y0: 0.0,
            dx: 2e-3,
            dy: 2e-3,
            nx_points: 1,
            ny_points: 1,
            lift_off: 3e-3,
            orientation: 0.0,
            f_in: 15e3,
            v_drive: 10.0,
            gain: 1e12,
            extra_phase: std::f64::consts::PI,
            n_periods: 20,
            fs: 1.5e6,
            noise: NoiseModel::none(),
        }
    }
}

impl ScanPlan {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dx", self.dx),
            ("v_drive", self.v_drive),
            ("dy", self.dy),
            ("f_in", self.f_in),
            ("gain", self.gain),
            ("fs", self.fs),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.nx_points == 0 || self.ny_points == 0 {
            return Err(Error::InvalidArgument("scan needs at least one point per axis".into()));
        }
        if !(self.lift_off >= 0.0) || !self.x0.is_finite() || !self.y0.is_finite() || !self.orientation.is_finite() {
            return Err(Error::InvalidArgument("lift_off must be >= 0 and the origin finite".into()));
        }
        if self.n_periods == 0 {
            return Err(Error::InvalidArgument("n_periods must be >= 1".into()));
        }
        self.noise.validate()
    }

    pub fn position(&self, i: usize, j: usize) -> [f64; 2] {
        [self.x0 + i as f64 * self.dx, self.y0 + j as f64 * self.dy]
    }

    pub fn meta(&self) -> GridMeta {
        GridMeta {
            x0: self.x0,
            y0: self.y0,
            dx: self.dx,
            dy: self.dy,
        }
    }

    pub fn reference(&self) -> Result<ReferenceSignal> {
        ReferenceSignal::new(self.f_in, self.v_drive, 0.0)
    }

    pub fn seed_at(&self, i: usize, j: usize) -> u64 {
        self.noise.seed.wrapping_add((j * self.nx_points + i) as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanOrder {
    #[default]
    RowMajor,
    ColumnMajor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    pub domain: DomainSpec,
    pub solver: SolverConfig,
    /// Start each solve from the previous position's potential along a line.
    pub warm_start: bool,
    pub order: ScanOrder,
}

/// The four lock-in channels plus the raw sensed charge per position.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutput {
    pub r: ScanImage,
    pub phi: ScanImage,
    pub x: ScanImage,
    pub y: ScanImage,
    /// Row-major like the images.
    pub charges: Vec<Complex64>,
}

/// One measured position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub charge: InducedCharge,
    pub demod: Demodulation,
}

fn check_bounds(sample: &SampleSpec, plan: &ScanPlan, padding: f64) -> Result<()> {
    let tol = 1e-12;
    for (i, j) in [
        (0, 0),
        (plan.nx_points - 1, plan.ny_points - 1),
    ] {
        let [x, y] = plan.position(i, j);
        if x < -padding - tol
            || x > sample.width + padding + tol
            || y < -padding - tol
            || y > sample.length + padding + tol
        {
            return Err(Error::Bounds(format!(
                "scan position ({x}, {y}) outside sample plus padding {padding} m"
            )));
        }
    }
    Ok(())
}

/// Lock-in measurement chain for a solved charge at one scan position.
pub fn measure_charge(q: InducedCharge, plan: &ScanPlan, seed: u64) -> Result<Demodulation> {
    let (v_out, theta_out) = charge_to_voltage(&q, plan.gain, plan.extra_phase)?;
    let reference = plan.reference()?;
    let ts = synthesize(v_out, theta_out, &reference, plan.fs, plan.n_periods, &plan.noise.with_seed(seed))?;
    demodulate(&ts, &reference)
}

fn measure_position(
    sample: &SampleSpec,
    probe: &Probe,
    plan: &ScanPlan,
    settings: &ScanSettings,
    (i, j): (usize, usize),
    guess: Option<&[Complex64]>,
) -> Result<(Measurement, Vec<Complex64>)> {
    let (grid, bc) = build_grid(sample, probe, plan.position(i, j), &settings.domain)?;
    let mut problem = FieldProblem::new(&grid, &bc)?;
    let guess = guess.filter(|g| g.len() == grid.len());
    let field = problem.solve(plan.v_drive, &settings.solver, guess)?;
    let charge = problem.induced_charge(&field);
    let demod = measure_charge(charge, plan, plan.seed_at(i, j))?;
    Ok((Measurement { charge, demod }, field.values))
}

/// Runs the scan. Lines (rows or columns, per `settings.order`) are evaluated
/// in parallel; positions within a line run in order so the warm start chain
/// is fixed and the output is reproducible.
pub fn run_scan(
    sample: &SampleSpec,
    probe: &Probe,
    plan: &ScanPlan,
    settings: &ScanSettings,
) -> Result<ScanOutput> {
    plan.validate()?;
    sample.validate()?;
    let probe = probe
        .clone()
        .with_lift_off(plan.lift_off)
        .with_orientation(plan.orientation);
    probe.validate()?;
    check_bounds(sample, plan, settings.domain.padding)?;

    let (nx, ny) = (plan.nx_points, plan.ny_points);
    let lines: Vec<Vec<(usize, usize)>> = match settings.order {
        ScanOrder::RowMajor => (0..ny).map(|j| (0..nx).map(|i| (i, j)).collect()).collect(),
        ScanOrder::ColumnMajor => (0..nx).map(|i| (0..ny).map(|j| (i, j)).collect()).collect(),
    };
    let measured: Vec<Result<Vec<((usize, usize), Measurement)>>> = lines
        .par_iter()
        .map(|line| {
            let mut previous: Option<Vec<Complex64>> = None;
            let mut out = Vec::with_capacity(line.len());
            for &(i, j) in line {
                let guess = if settings.warm_start { previous.as_deref() } else { None };
                let (m, field) = measure_position(sample, &probe, plan, settings, (i, j), guess).map_err(|e| {
                    Error::ScanPosition {
                        i,
                        j,
                        source: Box::new(e),
                    }
                })?;
                log::debug!("scan ({i}, {j}): |q| = {:.6e}", m.charge.magnitude());
                previous = Some(field);
                out.push(((i, j), m));
            }
            Ok(out)
        })
        .collect();

    let n = nx * ny;
    let mut chans = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut charges = vec![Complex64::new(0.0, 0.0); n];
    for line in measured {
        for ((i, j), m) in line? {
            let k = j * nx + i;
            chans[0][k] = m.demod.r;
            chans[1][k] = m.demod.phi;
            chans[2][k] = m.demod.x;
            chans[3][k] = m.demod.y;
            charges[k] = m.charge.q;
        }
    }
    let meta = plan.meta();
    let [r, phi, x, y] = chans;
    Ok(ScanOutput {
        r: ScanImage::new(Channel::R, nx, ny, r, meta)?,
        phi: ScanImage::new(Channel::Phi, nx, ny, phi, meta)?,
        x: ScanImage::new(Channel::X, nx, ny, x, meta)?,
        y: ScanImage::new(Channel::Y, nx, ny, y, meta)?,
        charges,
    })
}

/// Paired amplitude and phase images read from CSV, with any header warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub r: ScanImage,
    pub phi: ScanImage,
    pub warnings: Vec<String>,
}

/// Reads externally measured R and φ grids.
pub fn ingest_csv(r_path: &Path, phi_path: &Path) -> Result<Ingested> {
    let (r, mut warnings) = read_image(r_path, Some(Channel::R))?;
    let (phi, w2) = read_image(phi_path, Some(Channel::Phi))?;
    warnings.extend(w2);
    r.check_same_shape(&phi)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Ingested { r, phi, warnings })
}

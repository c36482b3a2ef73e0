//! Software lock-in: charge-amplifier model, tone synthesis and X/Y demodulation.

use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldsolver::InducedCharge;

/// Wraps an angle to `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSignal {
    pub f_in: f64,
    pub v_ref: f64,
    pub theta_ref: f64,
}

impl ReferenceSignal {
    pub fn new(f_in: f64, v_ref: f64, theta_ref: f64) -> Result<Self> {
        let r = ReferenceSignal {
            f_in,
            v_ref,
            theta_ref,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_in > 0.0) || !self.f_in.is_finite() {
            return Err(Error::InvalidArgument(format!("f_in must be > 0, got {}", self.f_in)));
        }
        if !(self.v_ref > 0.0) || !self.v_ref.is_finite() {
            return Err(Error::InvalidArgument(format!("v_ref must be > 0, got {}", self.v_ref)));
        }
        if !self.theta_ref.is_finite() {
            return Err(Error::InvalidArgument("theta_ref must be finite".into()));
        }
        Ok(())
    }
}

/// Uniformly sampled voltage; sample `n` is taken at `t0 + n / fs`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub fs: f64,
    pub samples: Vec<f64>,
    pub t0: f64,
}

impl TimeSeries {
    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.fs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demodulation {
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    WhiteGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Standard deviation per sample, volts.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel::default()
    }

    pub fn white(sigma: f64, seed: u64) -> Self {
        NoiseModel {
            kind: NoiseKind::WhiteGaussian,
            sigma,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        NoiseModel { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    fn stream(&self, n: usize) -> Vec<f64> {
        match self.kind {
            NoiseKind::None => vec![0.0; n],
            NoiseKind::WhiteGaussian => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        self.sigma * z
                    })
                    .collect()
            }
        }
    }
}

fn check_nyquist(fs: f64, f_in: f64) -> Result<()> {
    if !(fs > 2.0 * f_in) || !fs.is_finite() {
        return Err(Error::Sampling(format!(
            "sample rate {fs} Hz must exceed twice the reference frequency {f_in} Hz"
        )));
    }
    Ok(())
}

/// Number of samples covering `n_periods` reference periods, to the nearest sample.
pub fn samples_for_periods(fs: f64, f_in: f64, n_periods: usize) -> usize {
    (n_periods as f64 * fs / f_in).round() as usize
}

/// `v_out·sin(2π f_in t + theta_out)` plus noise, `n_periods` long, starting at t = 0.
pub fn synthesize(
    v_out: f64,
    theta_out: f64,
    reference: &ReferenceSignal,
    fs: f64,
    n_periods: usize,
    noise: &NoiseModel,
) -> Result<TimeSeries> {
    reference.validate()?;
    noise.validate()?;
    check_nyquist(fs, reference.f_in)?;
    if n_periods == 0 {
        return Err(Error::InvalidArgument("n_periods must be >= 1".into()));
    }
    let n = samples_for_periods(fs, reference.f_in, n_periods);
    let w = TAU * reference.f_in;
    let mut samples = noise.stream(n);
    for (k, s) in samples.iter_mut().enumerate() {
        let t = k as f64 / fs;
        *s += v_out * (w * t + theta_out).sin();
    }
    Ok(TimeSeries {
        fs,
        samples,
        t0: 0.0,
    })
}

/// Solves the 3×3 symmetric system by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c] == 0.0 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in (c + 1)..3 {
            let f = a[r][c] / a[c][c];
            for k in c..3 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = ((r + 1)..3).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Synchronous demodulation against `v_ref·sin(ωt + θ_ref)` and its quadrature.
///
/// The low-pass stage is an average over the whole record, which must span an
/// integer number of reference periods to within half a sample. The average is
/// taken as a least-squares projection onto {sin, cos, 1} over the record. When
/// the record holds an integer number of samples per period this is exactly the
/// boxcar mean of `v·v_ref·sin` and `v·v_ref·cos`; otherwise it removes the
/// residual leakage of the fractional sample.
pub fn demodulate(ts: &TimeSeries, reference: &ReferenceSignal) -> Result<Demodulation> {
    reference.validate()?;
    check_nyquist(ts.fs, reference.f_in)?;
    let n = ts.samples.len();
    let exact = n as f64 * reference.f_in / ts.fs;
    let periods = exact.round();
    let misfit = (n as f64 - periods * ts.fs / reference.f_in).abs();
    if periods < 1.0 || misfit > 0.5 {
        return Err(Error::PeriodAlignment { periods: exact });
    }
    let w = TAU * reference.f_in;
    // Gram matrix and projections for basis (sin, cos, 1).
    let mut g = [[0.0; 3]; 3];
    let mut p = [0.0; 3];
    for (k, &v) in ts.samples.iter().enumerate() {
        let arg = w * ts.time(k) + reference.theta_ref;
        let basis = [arg.sin(), arg.cos(), 1.0];
        for a in 0..3 {
            p[a] += basis[a] * v;
            for b in a..3 {
                g[a][b] += basis[a] * basis[b];
            }
        }
    }
    for a in 0..3 {
        for b in 0..a {
            g[a][b] = g[b][a];
        }
    }
    let coef = solve3(g, p).ok_or_else(|| Error::Sampling("degenerate demodulation basis".into()))?;
    let x = 0.5 * reference.v_ref * coef[0];
    let y = 0.5 * reference.v_ref * coef[1];
    let r = (x * x + y * y).sqrt();
    let phi = wrap_phase(y.atan2(x));
    Ok(Demodulation { x, y, r, phi })
}

/// Charge-amplifier model: `v_out = gain·|q|`, `θ_out = arg q + extra_phase`.
pub fn charge_to_voltage(q: &InducedCharge, gain: f64, extra_phase: f64) -> Result<(f64, f64)> {
    if !(gain > 0.0) || !gain.is_finite() {
        return Err(Error::InvalidArgument(format!("gain must be > 0, got {gain}")));
    }
    Ok((gain * q.magnitude(), wrap_phase(q.phase() + extra_phase)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn reference(theta: f64) -> ReferenceSignal {
        ReferenceSignal::new(15e3, 1.0, theta).unwrap()
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_phase(0.0), 0.0);
    }

    #[test]
    fn synthesized_peak_is_amplitude() {
        let ts = synthesize(1.0, 0.0, &reference(0.0), 1e6, 10, &NoiseModel::none()).unwrap();
        let peak = ts.samples.iter().cloned().fold(f64::MIN, f64::max);
        // One sample spans 2π·f_in/fs of phase.
        let quant = 1.0 - (PI * 15e3 / 1e6).cos();
        assert!(peak <= 1.0 && peak >= 1.0 - quant);
        assert_eq!(ts.samples.len(), 667);
    }

    #[test]
    fn zero_amplitude_is_pure_noise() {
        let noise = NoiseModel::white(0.1, 7);
        let ts = synthesize(0.0, 0.3, &reference(0.0), 1e6, 4, &noise).unwrap();
        assert_eq!(ts.samples, noise.stream(ts.samples.len()));
    }

    #[test]
    fn same_seed_same_series() {
        let noise = NoiseModel::white(0.5, 42);
        let a = synthesize(1.0, 0.0, &reference(0.0), 1e6, 3, &noise).unwrap();
        let b = synthesize(1.0, 0.0, &reference(0.0), 1e6, 3, &noise).unwrap();
        assert_eq!(a, b);
        let c = synthesize(1.0, 0.0, &reference(0.0), 1e6, 3, &noise.with_seed(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn nyquist_violation_rejected() {
        let err = synthesize(1.0, 0.0, &reference(0.0), 30e3, 3, &NoiseModel::none()).unwrap_err();
        assert!(matches!(err, Error::Sampling(_)));
    }

    #[test]
    fn in_phase_and_quadrature_examples() {
        let ts = synthesize(1.0, 0.0, &reference(0.0), 1.5e6, 10, &NoiseModel::none()).unwrap();
        let d = demodulate(&ts, &reference(0.0)).unwrap();
        assert!((d.x - 0.5).abs() < 1e-12 && d.y.abs() < 1e-12);
        assert!((d.r - 0.5).abs() < 1e-12 && d.phi.abs() < 1e-12);
        let ts = synthesize(1.0, PI / 2.0, &reference(0.0), 1.5e6, 10, &NoiseModel::none()).unwrap();
        let d = demodulate(&ts, &reference(0.0)).unwrap();
        assert!(d.x.abs() < 1e-12 && (d.y - 0.5).abs() < 1e-12);
        assert!((d.phi - PI / 2.0).abs() < 1e-12);
    }

    /// Oracle: plain mean of the mixed products over a record
    /// with an integer number of samples per period.
    fn boxcar(ts: &TimeSeries, r: &ReferenceSignal) -> (f64, f64) {
        let n = ts.samples.len() as f64;
        let w = TAU * r.f_in;
        let mut x = 0.0;
        let mut y = 0.0;
        for (k, v) in ts.samples.iter().enumerate() {
            let a = w * ts.time(k) + r.theta_ref;
            x += v * r.v_ref * a.sin();
            y += v * r.v_ref * a.cos();
        }
        (x / n, y / n)
    }

    #[test]
    fn projection_equals_boxcar_mean_when_commensurate() {
        let r = ReferenceSignal::new(15e3, 2.0, 0.4).unwrap();
        let noise = NoiseModel::white(0.3, 11);
        let ts = synthesize(1.3, -1.1, &r, 1.5e6, 20, &noise).unwrap();
        let d = demodulate(&ts, &r).unwrap();
        let (x, y) = boxcar(&ts, &r);
        assert!((d.x - x).abs() < 1e-12 && (d.y - y).abs() < 1e-12);
    }

    #[test]
    fn double_frequency_tone_is_rejected() {
        let r = reference(0.2);
        let fs = 1.5e6;
        let n = samples_for_periods(fs, r.f_in, 10);
        let samples = (0..n)
            .map(|k| 3.0 * (TAU * 2.0 * r.f_in * k as f64 / fs + 0.7).sin())
            .collect();
        let ts = TimeSeries { fs, samples, t0: 0.0 };
        let d = demodulate(&ts, &r).unwrap();
        let (x, y) = boxcar(&ts, &r);
        assert!(d.x.abs() < 1e-12 && d.y.abs() < 1e-12);
        assert!(x.abs() < 1e-12 && y.abs() < 1e-12);
    }

    #[test]
    fn misaligned_record_is_rejected() {
        let r = reference(0.0);
        let ts = TimeSeries {
            fs: 1e6,
            samples: vec![0.0; 700],
            t0: 0.0,
        };
        assert!(matches!(demodulate(&ts, &r), Err(Error::PeriodAlignment { .. })));
    }

    #[test]
    fn charge_amplifier_examples() {
        let q = InducedCharge {
            q: Complex64::from_polar(1e-12, 0.3),
        };
        let (v, th) = charge_to_voltage(&q, 1e12, 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12 && (th - 0.3).abs() < 1e-12);
        let (v2, th2) = charge_to_voltage(&q, 2e12, 0.0).unwrap();
        assert_eq!(v2, 2.0 * v);
        assert_eq!(th2, th);
        let q = InducedCharge {
            q: Complex64::from_polar(1e-12, PI / 2.0),
        };
        let (_, th) = charge_to_voltage(&q, 1e12, PI).unwrap();
        assert!((th + PI / 2.0).abs() < 1e-12);
        assert!(charge_to_voltage(&q, 0.0, 0.0).is_err());
    }

    #[test]
    fn noise_error_shrinks_with_record_length() {
        let r = reference(0.0);
        let spread = |periods: usize| {
            let errs: Vec<f64> = (0..100)
                .map(|seed| {
                    let ts = synthesize(1.0, 0.5, &r, 1e6, periods, &NoiseModel::white(0.5, seed)).unwrap();
                    demodulate(&ts, &r).unwrap().r - 0.5
                })
                .collect();
            let m = errs.iter().sum::<f64>() / errs.len() as f64;
            (errs.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (errs.len() - 1) as f64).sqrt()
        };
        let ratio = spread(10) / spread(160);
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn noiseless_round_trip(v in 0.01f64..10.0, th_out in -PI..PI, th_ref in -PI..PI, periods in 1usize..40) {
            let r = ReferenceSignal::new(15e3, 1.7, th_ref).unwrap();
            let ts = synthesize(v, th_out, &r, 1e6, periods, &NoiseModel::none()).unwrap();
            let d = demodulate(&ts, &r).unwrap();
            prop_assert!((d.r - 0.5 * v * 1.7).abs() <= 1e-9 * d.r);
            prop_assert!(wrap_phase(d.phi - (th_out - th_ref)).abs() <= 1e-9);
            prop_assert_eq!(d.r, (d.x * d.x + d.y * d.y).sqrt());
            prop_assert!(d.phi > -PI && d.phi <= PI);
        }

        #[test]
        fn reference_phase_covariance(th_out in -PI..PI, th_ref in -PI..PI, shift in -PI..PI, seed in 0u64..1000) {
            let noise = NoiseModel::white(0.2, seed);
            let r0 = ReferenceSignal::new(15e3, 1.0, th_ref).unwrap();
            let r1 = ReferenceSignal::new(15e3, 1.0, th_ref + shift).unwrap();
            let ts = synthesize(1.0, th_out, &r0, 1.5e6, 5, &noise).unwrap();
            let a = demodulate(&ts, &r0).unwrap();
            let b = demodulate(&ts, &r1).unwrap();
            prop_assert!((a.r - b.r).abs() <= 1e-12 * a.r.max(1e-300) + 1e-15);
            prop_assert!(wrap_phase(b.phi - (a.phi - shift)).abs() < 1e-9);
        }
    }
}

//! Quantitative image evaluation: line profiles, per-defect peaks, linear fits
//! against defect depth and region SNR.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DefectKind, SampleSpec};
use crate::image::{Channel, ScanImage};

/// An image line. Pixel coordinates are `(i, j)` = (column, row).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSpec {
    Row(usize),
    Column(usize),
    /// Straight segment sampled at the nearest pixel, one sample per step
    /// along the longer axis.
    Segment { from: [usize; 2], to: [usize; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineProfile {
    /// Distance along the line, in the image's length units. Strictly increasing.
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
    pub channel: Channel,
}

pub fn line_profile(img: &ScanImage, line: LineSpec) -> Result<LineProfile> {
    let oob = || Error::Bounds(format!("line {line:?} outside {}x{} image", img.ny, img.nx));
    let (positions, values): (Vec<f64>, Vec<f64>) = match line {
        LineSpec::Row(j) => {
            if j >= img.ny {
                return Err(oob());
            }
            (0..img.nx).map(|i| (img.x_of(i), img.at(i, j))).unzip()
        }
        LineSpec::Column(i) => {
            if i >= img.nx {
                return Err(oob());
            }
            (0..img.ny).map(|j| (img.y_of(j), img.at(i, j))).unzip()
        }
        LineSpec::Segment { from, to } => {
            if from[0] >= img.nx || to[0] >= img.nx || from[1] >= img.ny || to[1] >= img.ny {
                return Err(oob());
            }
            let di = to[0] as f64 - from[0] as f64;
            let dj = to[1] as f64 - from[1] as f64;
            let steps = di.abs().max(dj.abs()) as usize;
            let length = ((di * img.meta.dx).powi(2) + (dj * img.meta.dy).powi(2)).sqrt();
            (0..=steps)
                .map(|s| {
                    let t = if steps == 0 { 0.0 } else { s as f64 / steps as f64 };
                    let i = (from[0] as f64 + t * di).round() as usize;
                    let j = (from[1] as f64 + t * dj).round() as usize;
                    (t * length, img.at(i, j))
                })
                .unzip()
        }
    };
    if positions.len() < 2 || positions.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!(
            "line {line:?} needs at least two distinct positions"
        )));
    }
    Ok(LineProfile {
        positions,
        values,
        channel: img.channel,
    })
}

/// Indices of local maxima whose topographic prominence is at least `min_prominence`.
pub fn local_maxima(values: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = values.len();
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        // Treat a plateau as one candidate at its first index.
        let mut end = k;
        while end + 1 < n && values[end + 1] == values[k] {
            end += 1;
        }
        let left_lower = k == 0 || values[k - 1] < values[k];
        let right_lower = end + 1 == n || values[end + 1] < values[k];
        if left_lower && right_lower && n > 1 {
            let v = values[k];
            let mut left_min = v;
            for &w in values[..k].iter().rev() {
                if w > v {
                    break;
                }
                left_min = left_min.min(w);
            }
            let mut right_min = v;
            for &w in &values[end + 1..] {
                if w > v {
                    break;
                }
                right_min = right_min.min(w);
            }
            if v - left_min.max(right_min) >= min_prominence {
                out.push(k);
            }
        }
        k = end + 1;
    }
    out
}

pub type Footprint = Vec<(usize, usize)>;

/// Scan pixels whose position lies inside each defect's lateral outline. A
/// defect smaller than the scan step maps to its nearest pixel.
pub fn footprints_from_defects(sample: &SampleSpec, img: &ScanImage) -> Vec<Footprint> {
    sample
        .defects
        .iter()
        .map(|d| {
            let [cx, cy] = d.center;
            let [a, b] = [d.lateral_size[0] / 2.0, d.lateral_size[1] / 2.0];
            let mut fp = Vec::new();
            for j in 0..img.ny {
                for i in 0..img.nx {
                    let (u, v) = (img.x_of(i) - cx, img.y_of(j) - cy);
                    let inside = match d.kind {
                        DefectKind::RectVoid => u.abs() <= a && v.abs() <= b,
                        DefectKind::FlatBottomedHole | DefectKind::EllipsoidBlob => {
                            (u / a).powi(2) + (v / b).powi(2) <= 1.0
                        }
                    };
                    if inside {
                        fp.push((i, j));
                    }
                }
            }
            if fp.is_empty() {
                fp.push(nearest_pixel(img, d.center));
            }
            fp
        })
        .collect()
}

pub fn nearest_pixel(img: &ScanImage, p: [f64; 2]) -> (usize, usize) {
    let fi = ((p[0] - img.meta.x0) / img.meta.dx).round();
    let fj = ((p[1] - img.meta.y0) / img.meta.dy).round();
    (
        fi.clamp(0.0, (img.nx - 1) as f64) as usize,
        fj.clamp(0.0, (img.ny - 1) as f64) as usize,
    )
}

/// Pixels within Euclidean pixel distance `margin` of the footprint.
pub fn dilate(footprint: &[(usize, usize)], margin: usize, nx: usize, ny: usize) -> Footprint {
    let m = margin as isize;
    let mut keep = vec![false; nx * ny];
    for &(i, j) in footprint {
        for dj in -m..=m {
            for di in -m..=m {
                if di * di + dj * dj > m * m {
                    continue;
                }
                let (x, y) = (i as isize + di, j as isize + dj);
                if x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny {
                    keep[y as usize * nx + x as usize] = true;
                }
            }
        }
    }
    (0..nx * ny)
        .filter(|&k| keep[k])
        .map(|k| (k % nx, k / nx))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectPeak {
    pub footprint_pixels: usize,
    pub search_pixels: usize,
    pub peak_value: f64,
    pub peak_pixel: [usize; 2],
    pub peak_position: [f64; 2],
    /// Distance from the known defect center, when given.
    pub localization_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectReport {
    pub channel: Channel,
    pub defects: Vec<DefectPeak>,
}

impl DefectReport {
    pub fn peak_values(&self) -> Vec<f64> {
        self.defects.iter().map(|d| d.peak_value).collect()
    }
}

/// Maximum of `img` over each footprint dilated by `dilation_px` pixels.
/// Ties resolve to the first pixel in row-major order.
pub fn peaks_per_defect(
    img: &ScanImage,
    footprints: &[Footprint],
    dilation_px: usize,
    centers: Option<&[[f64; 2]]>,
) -> Result<DefectReport> {
    if let Some(c) = centers {
        if c.len() != footprints.len() {
            return Err(Error::InvalidArgument("one center per footprint required".into()));
        }
    }
    let mut defects = Vec::with_capacity(footprints.len());
    for (n, fp) in footprints.iter().enumerate() {
        if fp.is_empty() {
            return Err(Error::InvalidArgument(format!("footprint {n} is empty")));
        }
        if let Some(&(i, j)) = fp.iter().find(|&&(i, j)| i >= img.nx || j >= img.ny) {
            return Err(Error::Bounds(format!(
                "footprint {n} pixel ({i}, {j}) outside {}x{} image",
                img.ny, img.nx
            )));
        }
        let search = dilate(fp, dilation_px, img.nx, img.ny);
        let &(bi, bj) = search
            .iter()
            .reduce(|best, p| if img.at(p.0, p.1) > img.at(best.0, best.1) { p } else { best })
            .expect("dilation keeps the footprint");
        let pos = [img.x_of(bi), img.y_of(bj)];
        defects.push(DefectPeak {
            footprint_pixels: fp.len(),
            search_pixels: search.len(),
            peak_value: img.at(bi, bj),
            peak_pixel: [bi, bj],
            peak_position: pos,
            localization_error: centers.map(|c| ((pos[0] - c[n][0]).powi(2) + (pos[1] - c[n][1]).powi(2)).sqrt()),
        });
    }
    Ok(DefectReport {
        channel: img.channel,
        defects,
    })
}

/// Argmax of an image inside one defect's nearest-center cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellArgmax {
    pub pixel: [usize; 2],
    pub value: f64,
    /// Whether the argmax lies in the defect's dilated footprint.
    pub inside: bool,
}

/// Splits the image into cells of pixels nearest to each defect center and
/// checks that each cell's maximum falls inside that defect's dilated footprint.
pub fn argmax_per_cell(
    img: &ScanImage,
    footprints: &[Footprint],
    centers: &[[f64; 2]],
    dilation_px: usize,
) -> Result<Vec<CellArgmax>> {
    if centers.len() != footprints.len() || centers.is_empty() {
        return Err(Error::InvalidArgument("one center per footprint required".into()));
    }
    let mut best: Vec<Option<(usize, usize)>> = vec![None; centers.len()];
    for j in 0..img.ny {
        for i in 0..img.nx {
            let (x, y) = (img.x_of(i), img.y_of(j));
            let cell = (0..centers.len())
                .min_by(|&a, &b| {
                    let da = (x - centers[a][0]).powi(2) + (y - centers[a][1]).powi(2);
                    let db = (x - centers[b][0]).powi(2) + (y - centers[b][1]).powi(2);
                    da.total_cmp(&db)
                })
                .expect("non-empty");
            let better = match best[cell] {
                None => true,
                Some((bi, bj)) => img.at(i, j) > img.at(bi, bj),
            };
            if better {
                best[cell] = Some((i, j));
            }
        }
    }
    best.iter()
        .zip(footprints)
        .enumerate()
        .map(|(n, (b, fp))| {
            let (i, j) = b.ok_or_else(|| Error::InvalidArgument(format!("defect {n} owns no pixels")))?;
            let region = dilate(fp, dilation_px, img.nx, img.ny);
            Ok(CellArgmax {
                pixel: [i, j],
                value: img.at(i, j),
                inside: region.contains(&(i, j)),
            })
        })
        .collect()
}

/// Whether `values`, ordered by increasing `keys`, are strictly monotonic.
pub fn strictly_monotonic(keys: &[f64], values: &[f64]) -> bool {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    let v: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    v.len() >= 2 && (v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// `sqrt(mean(residual²))`, with 1/n.
    pub rmse: f64,
    pub n_points: usize,
}

impl FitResult {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "x has {} points, y has {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument("linear fit needs at least 2 points".into()));
    }
    let nf = n as f64;
    let xm = x.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - xm) * (v - xm)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("x values are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum();
    Ok(FitResult {
        slope,
        intercept,
        rmse: (sse / nf).sqrt(),
        n_points: n,
    })
}

/// Min-max normalizes a set of peak values.
pub fn normalize_peaks(values: &[f64]) -> Result<Vec<f64>> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::DegenerateRange);
    }
    Ok(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// Per-channel depth fit of normalized defect peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    pub channel: Channel,
    pub peaks: Vec<f64>,
    pub normalized_peaks: Vec<f64>,
    pub fit: FitResult,
}

fn channel_fit(img: &ScanImage, footprints: &[Footprint], depths: &[f64], dilation_px: usize) -> Result<ChannelFit> {
    let report = peaks_per_defect(img, footprints, dilation_px, None)?;
    let peaks = report.peak_values();
    let normalized_peaks = normalize_peaks(&peaks)?;
    let fit = linear_fit(depths, &normalized_peaks)?;
    Ok(ChannelFit {
        channel: img.channel,
        peaks,
        normalized_peaks,
        fit,
    })
}

/// Fits normalized per-defect peaks against defect depth for two channels.
pub fn compare_channels(
    img_a: &ScanImage,
    img_b: &ScanImage,
    footprints: &[Footprint],
    depths: &[f64],
    dilation_px: usize,
) -> Result<(ChannelFit, ChannelFit)> {
    img_a.check_same_shape(img_b)?;
    if depths.len() != footprints.len() {
        return Err(Error::InvalidArgument(format!(
            "{} depths for {} footprints",
            depths.len(),
            footprints.len()
        )));
    }
    Ok((
        channel_fit(img_a, footprints, depths, dilation_px)?,
        channel_fit(img_b, footprints, depths, dilation_px)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snr {
    /// `+∞` when the background has zero spread; `−∞` when the means coincide.
    #[serde(with = "crate::io::nonfinite")]
    pub db: f64,
    /// Set when the value is the zero-spread sentinel rather than a ratio.
    pub zero_background_std: bool,
}

/// `20·log10(|mean(signal) − mean(background)| / std(background))`, with the
/// population standard deviation.
pub fn snr_db(img: &ScanImage, signal: &[(usize, usize)], background: &[(usize, usize)]) -> Result<Snr> {
    let gather = |region: &[(usize, usize)], name: &str| -> Result<Vec<f64>> {
        if region.is_empty() {
            return Err(Error::InvalidArgument(format!("{name} region is empty")));
        }
        region
            .iter()
            .map(|&(i, j)| {
                if i < img.nx && j < img.ny {
                    Ok(img.at(i, j))
                } else {
                    Err(Error::Bounds(format!("{name} pixel ({i}, {j}) outside image")))
                }
            })
            .collect()
    };
    let s = gather(signal, "signal")?;
    let b = gather(background, "background")?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ms, mb) = (mean(&s), mean(&b));
    let sd = (b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / b.len() as f64).sqrt();
    if sd == 0.0 {
        return Ok(Snr {
            db: f64::INFINITY,
            zero_background_std: true,
        });
    }
    Ok(Snr {
        db: 20.0 * ((ms - mb).abs() / sd).log10(),
        zero_background_std: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GridMeta;
    use proptest::prelude::*;

    fn grid(nx: usize, ny: usize, f: impl Fn(usize, usize) -> f64) -> ScanImage {
        let mut values = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(i, j));
            }
        }
        ScanImage::new(Channel::Delta, nx, ny, values, GridMeta {
            x0: 0.01,
            y0: 0.02,
            dx: 0.002,
            dy: 0.003,
        })
        .unwrap()
    }

    #[test]
    fn row_profiles() {
        let c = grid(5, 4, |_, _| 0.7);
        assert!(line_profile(&c, LineSpec::Row(2)).unwrap().values.iter().all(|&v| v == 0.7));
        let img = grid(5, 4, |i, j| (i * 10 + j) as f64);
        let p = line_profile(&img, LineSpec::Row(3)).unwrap();
        assert_eq!(p.values, img.row(3));
        assert_eq!(p.positions[1], img.x_of(1));
        assert!(line_profile(&img, LineSpec::Row(4)).is_err());
        assert!(line_profile(&img, LineSpec::Column(5)).is_err());
    }

    #[test]
    fn transpose_swaps_rows_and_columns() {
        let img = grid(5, 4, |i, j| (i * i + 3 * j) as f64);
        let t = img.transpose();
        for j in 0..4 {
            assert_eq!(line_profile(&img, LineSpec::Row(j)).unwrap(), line_profile(&t, LineSpec::Column(j)).unwrap());
        }
        let a = line_profile(&img, LineSpec::Segment { from: [0, 0], to: [4, 3] }).unwrap();
        let b = line_profile(&t, LineSpec::Segment { from: [0, 0], to: [3, 4] }).unwrap();
        assert_eq!(a.values, b.values);
        for (x, y) in a.positions.iter().zip(&b.positions) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn prominent_maxima() {
        let v = [0.0, 1.0, 0.2, 0.25, 0.2, 2.0, 2.0, 0.0, 0.9, 0.0];
        assert_eq!(local_maxima(&v, 0.5), vec![1, 5, 8]);
        assert_eq!(local_maxima(&v, 0.01), vec![1, 3, 5, 8]);
        assert_eq!(local_maxima(&[1.0, 1.0, 1.0], 0.0), vec![0]);
        assert!(local_maxima(&[1.0, 1.0, 1.0], 0.1).is_empty());
    }

    #[test]
    fn defect_peaks() {
        let img = grid(6, 6, |i, j| if (i, j) == (1, 1) { 10.0 } else { (i + j) as f64 * 0.1 });
        let r = peaks_per_defect(&img, &[vec![(4, 4)]], 0, None).unwrap();
        assert_eq!(r.defects[0].peak_value, img.at(4, 4));
        let r = peaks_per_defect(&img, &[vec![(1, 1), (1, 2)], vec![(4, 4), (5, 4)]], 0, Some(&[[0.012, 0.023], [0.0, 0.0]])).unwrap();
        assert_eq!(r.defects[0].peak_value, 10.0);
        assert_eq!(r.defects[1].peak_pixel, [5, 4]);
        assert!(r.defects[0].localization_error.unwrap() < 1e-12);
        let d = peaks_per_defect(&img, &[vec![(4, 4)]], 1, None).unwrap();
        assert_eq!(d.defects[0].peak_pixel, [5, 4]);
        assert_eq!(d.defects[0].search_pixels, 5);
        assert!(peaks_per_defect(&img, &[vec![]], 0, None).is_err());
        assert!(peaks_per_defect(&img, &[vec![(6, 0)]], 0, None).is_err());
    }

    #[test]
    fn fit_examples() {
        let f = linear_fit(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15 && f.rmse < 1e-15);
        let f = linear_fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap();
        // Normal equations: [3 3; 3 5]·[c; m] = [1; 1] → m = 0, c = 1/3.
        let (m, c) = (0.0, 1.0 / 3.0);
        let rmse = (([0.0, 1.0, 0.0].iter().enumerate().map(|(k, y)| (y - (m * k as f64 + c)).powi(2)).sum::<f64>()) / 3.0).sqrt();
        assert!(f.slope.abs() < 1e-15 && (f.intercept - c).abs() < 1e-15);
        assert!((f.rmse - rmse).abs() < 1e-15);
        assert!((f.rmse - (2.0f64 / 9.0).sqrt()).abs() < 1e-15);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 2.0]).is_err());
        assert!(linear_fit(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn channel_comparison() {
        let depths = [0.002, 0.004, 0.006, 0.008];
        let fps: Vec<Footprint> = (0..4).map(|k| vec![(k * 2, 1)]).collect();
        let a = grid(8, 3, |i, j| if j == 1 && i % 2 == 0 { 1.0 + i as f64 } else { 0.0 });
        let b = grid(8, 3, |i, j| if j == 1 && i % 2 == 0 { 1.0 + (i * i) as f64 } else { 0.0 });
        let (fa, fb) = compare_channels(&a, &b, &fps, &depths, 0).unwrap();
        assert!(fa.fit.rmse < 1e-12 && fb.fit.rmse > fa.fit.rmse);
        let (x, y) = compare_channels(&a, &a, &fps, &depths, 0).unwrap();
        assert_eq!(x, y);
        assert!(compare_channels(&a, &b, &fps, &depths[..3], 0).is_err());
    }

    #[test]
    fn snr_examples() {
        let img = grid(4, 1, |i, _| [9.0, 11.0, -1.0, 1.0][i]);
        let s = snr_db(&img, &[(0, 0), (1, 0)], &[(2, 0), (3, 0)]).unwrap();
        assert!((s.db - 20.0).abs() < 1e-12);
        let same = snr_db(&img, &[(2, 0), (3, 0)], &[(2, 0), (3, 0)]).unwrap();
        assert_eq!(same.db, f64::NEG_INFINITY);
        let flat = grid(3, 1, |i, _| if i == 0 { 5.0 } else { 1.0 });
        let z = snr_db(&flat, &[(0, 0)], &[(1, 0), (2, 0)]).unwrap();
        assert!(z.zero_background_std && z.db == f64::INFINITY);
        assert!(snr_db(&img, &[], &[(0, 0)]).is_err());
    }

    #[test]
    fn auto_footprints_cover_defects() {
        use crate::geometry::DefectSpec;
        use num_complex::Complex64;
        let mut sample = SampleSpec::homogeneous(0.1, 0.1, 0.01, Complex64::new(2.7, 0.0));
        sample.defects.push(DefectSpec::hole([0.02, 0.026], 0.005, 0.005));
        sample.defects.push(DefectSpec::hole([0.0111, 0.0201], 0.0001, 0.005));
        let img = grid(10, 10, |_, _| 0.0);
        let fps = footprints_from_defects(&sample, &img);
        assert_eq!(fps[0].len(), 3);
        assert!(fps[0].contains(&(5, 2)));
        assert_eq!(fps[1], vec![(1, 0)]);
    }

    #[test]
    fn cell_argmax_and_monotonicity() {
        let img = grid(8, 3, |i, j| if (i, j) == (1, 1) { 5.0 } else if (i, j) == (7, 2) { 4.0 } else { 0.0 });
        let fps = vec![vec![(1, 1)], vec![(5, 1)]];
        let centers = [[img.x_of(1), img.y_of(1)], [img.x_of(5), img.y_of(1)]];
        let r = argmax_per_cell(&img, &fps, &centers, 1).unwrap();
        assert!(r[0].inside && r[0].pixel == [1, 1]);
        assert!(!r[1].inside && r[1].pixel == [7, 2]);
        assert!(argmax_per_cell(&img, &fps, &centers, 2).unwrap()[1].inside == false);
        assert!(argmax_per_cell(&img, &fps, &centers, 3).unwrap()[1].inside);
        assert!(strictly_monotonic(&[3.0, 1.0, 2.0], &[0.9, 0.1, 0.5]));
        assert!(strictly_monotonic(&[1.0, 2.0], &[1.0, 0.0]));
        assert!(!strictly_monotonic(&[1.0, 2.0, 3.0], &[0.0, 0.5, 0.5]));
    }

    proptest! {
        #[test]
        fn residuals_orthogonal(pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40)) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Ok(f) = linear_fit(&x, &y) {
                let res: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - f.predict(*a)).collect();
                let scale: f64 = y.iter().map(|v| v.abs()).sum::<f64>() * x.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
                prop_assert!(res.iter().sum::<f64>().abs() <= 1e-10 * scale);
                prop_assert!(res.iter().zip(&x).map(|(r, a)| r * a).sum::<f64>().abs() <= 1e-10 * scale);
                prop_assert!(f.rmse >= 0.0);
                let mut perm: Vec<usize> = (0..x.len()).collect();
                perm.reverse();
                let g = linear_fit(&perm.iter().map(|&k| x[k]).collect::<Vec<_>>(), &perm.iter().map(|&k| y[k]).collect::<Vec<_>>()).unwrap();
                prop_assert!((g.slope - f.slope).abs() <= 1e-10 * (1.0 + f.slope.abs()));
            }
        }

        #[test]
        fn peak_locations_survive_monotone_maps(vals in prop::collection::vec(-5.0f64..5.0, 36)) {
            let img = ScanImage::new(Channel::R, 6, 6, vals, GridMeta::default()).unwrap();
            let warped = img.map(Channel::R, |v| v.exp() * 3.0 + 1.0);
            let fps = vec![vec![(1, 1)], vec![(4, 3), (4, 4)]];
            let a = peaks_per_defect(&img, &fps, 1, None).unwrap();
            let b = peaks_per_defect(&warped, &fps, 1, None).unwrap();
            for (p, q) in a.defects.iter().zip(&b.defects) {
                prop_assert_eq!(p.peak_pixel, q.peak_pixel);
            }
        }
    }
}

//! End-to-end operations behind the command line: simulate, fuse, analyze,
//! demodulate and sensitivity.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    argmax_per_cell, compare_channels, footprints_from_defects, line_profile, local_maxima, nearest_pixel,
    peaks_per_defect, snr_db, strictly_monotonic, ChannelFit, CellArgmax, DefectReport, Footprint, LineProfile,
    LineSpec, Snr,
};
use crate::error::{Error, Result};
use crate::fieldsolver::{sensitivity_map, SensitivityMap, SensitivitySet};
use crate::fusion::{apply_mode, crop_margin, fuse, threshold, FusionConfig, FusionMode};
use crate::geometry::{build_grid, Material, PermittivityGrid};
use crate::image::{Channel, ScanImage};
use crate::io::config::{AmplitudeContrast, NamedProbe, OutputFormat, RunConfig, SensitivityRegion};
use crate::io::csv::{read_image, write_image};
use crate::io::pgm::export_pgm;
use crate::scanner::{ingest_csv, run_scan, ScanOutput};

/// Runs the configured scan for one probe.
pub fn simulate_probe(cfg: &RunConfig, probe: &NamedProbe) -> Result<ScanOutput> {
    let sample = cfg.sample_spec()?;
    let plan = cfg.scan_plan();
    let settings = cfg.solver.settings_for(&probe.probe);
    log::info!(
        "scanning {} x {} points with probe {}",
        plan.nx_points,
        plan.ny_points,
        probe.name
    );
    run_scan(&sample, &probe.probe, &plan, &settings)
}

/// Writes one image as CSV and/or PGM named after its channel.
pub fn write_channel(img: &ScanImage, dir: &Path, formats: &[OutputFormat], bit_depth: u8) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for f in formats {
        let path = match f {
            OutputFormat::Csv => {
                let p = dir.join(format!("{}.csv", img.channel));
                write_image(img, &p)?;
                p
            }
            OutputFormat::Pgm => {
                let p = dir.join(format!("{}.pgm", img.channel));
                export_pgm(img, &p, bit_depth)?;
                p
            }
        };
        written.push(path);
    }
    Ok(written)
}

/// Simulates every configured probe. A single probe writes into `out`;
/// several probes write into `out/<probe name>/`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let probes = cfg.named_probes()?;
    let mut written = Vec::new();
    for p in &probes {
        let dir = if probes.len() == 1 { out.to_path_buf() } else { out.join(&p.name) };
        fs::create_dir_all(&dir)?;
        let scan = simulate_probe(cfg, p)?;
        for img in [&scan.r, &scan.phi, &scan.x, &scan.y] {
            written.extend(write_channel(img, &dir, &cfg.output.formats, cfg.output.pgm_bit_depth)?);
        }
    }
    Ok(written)
}

/// Reads `R` and `PHI` CSV files, fuses them and writes the fused image as CSV
/// to `out` (plus a PGM next to it when `pgm_bit_depth` is given).
pub fn fuse_files(
    r_path: &Path,
    phi_path: &Path,
    cfg: &FusionConfig,
    out: &Path,
    pgm_bit_depth: Option<u8>,
) -> Result<ScanImage> {
    let ingested = ingest_csv(r_path, phi_path)?;
    let fused = fuse(&ingested.r, &ingested.phi, cfg)?.fused;
    write_image(&fused, out)?;
    if let Some(depth) = pgm_bit_depth {
        export_pgm(&fused, &out.with_extension("pgm"), depth)?;
    }
    Ok(fused)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSnr {
    pub channel: String,
    pub snr: Snr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub channel: String,
    pub maxima: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// `[rows, cols]` after cropping.
    pub shape: [usize; 2],
    pub crop_margin_px: usize,
    pub dilation_px: usize,
    pub depths: Vec<f64>,
    pub centers: Vec<[f64; 2]>,
    pub footprint_pixels: Vec<usize>,
    /// Peak reports for the amplitude contrast image, φ_norm, Δ and Ξ.
    pub peaks: Vec<DefectReport>,
    /// Depth fits need at least two defects; `null` otherwise.
    pub amplitude_fit: Option<ChannelFit>,
    pub delta_fit: Option<ChannelFit>,
    pub delta_rmse_not_worse: Option<bool>,
    pub delta_peaks_strictly_monotonic: Option<bool>,
    pub xi_cells: Vec<CellArgmax>,
    pub xi_localizes_all: bool,
    pub line: LineSpec,
    pub profile_maxima: Vec<ProfileSummary>,
    pub snr: Vec<NamedSnr>,
    /// Pixels of the configured-mode fused image at or above the threshold.
    pub threshold_pixels: Option<usize>,
}

/// Images produced during analysis, for export.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisImages {
    pub amplitude_contrast: ScanImage,
    pub phi_norm: ScanImage,
    pub delta: ScanImage,
    pub xi: ScanImage,
    pub profiles: Vec<LineProfile>,
    pub mask: Option<ScanImage>,
}

fn auto_line(img: &ScanImage, centers: &[[f64; 2]]) -> LineSpec {
    let pixels: Vec<(usize, usize)> = centers.iter().map(|&c| nearest_pixel(img, c)).collect();
    let (i0, j0) = pixels[0];
    if pixels.iter().all(|p| p.0 == i0) && img.ny >= 2 {
        LineSpec::Column(i0)
    } else if pixels.iter().all(|p| p.1 == j0) && img.nx >= 2 {
        LineSpec::Row(j0)
    } else {
        let last = pixels[pixels.len() - 1];
        LineSpec::Segment {
            from: [i0, j0],
            to: [last.0, last.1],
        }
    }
}

fn centroid(img: &ScanImage, fp: &Footprint) -> [f64; 2] {
    let n = fp.len() as f64;
    [
        fp.iter().map(|&(i, _)| img.x_of(i)).sum::<f64>() / n,
        fp.iter().map(|&(_, j)| img.y_of(j)).sum::<f64>() / n,
    ]
}

/// Full quantitative evaluation of a raw R/φ pair against the configured defects.
pub fn analyze(cfg: &RunConfig, r_raw: &ScanImage, phi_raw: &ScanImage) -> Result<(AnalysisReport, AnalysisImages)> {
    r_raw.check_same_shape(phi_raw)?;
    let a = &cfg.analysis;
    let (r, phi) = if a.crop_margin_px > 0 {
        (crop_margin(r_raw, a.crop_margin_px)?, crop_margin(phi_raw, a.crop_margin_px)?)
    } else {
        (r_raw.clone(), phi_raw.clone())
    };
    let fusion = FusionConfig {
        mode: FusionMode::Delta,
        ..cfg.fusion
    };
    let base = fuse(&r, &phi, &fusion)?;
    let delta = base.fused.clone();
    let xi = apply_mode(
        &base.r_norm,
        &base.phi_norm,
        &FusionConfig {
            mode: FusionMode::Xi,
            ..fusion
        },
    )?;
    let amplitude_contrast = match a.amplitude_contrast {
        AmplitudeContrast::Dip => base.r_norm.map(Channel::RNorm, |v| 1.0 - v),
        AmplitudeContrast::Peak => base.r_norm.clone(),
    };

    let (footprints, centers): (Vec<Footprint>, Vec<[f64; 2]>) = match a.explicit_footprints() {
        Some(fps) => {
            let centers = fps.iter().map(|fp| centroid(&r, fp)).collect();
            (fps, centers)
        }
        None => {
            let sample = cfg.sample_spec()?;
            if sample.defects.is_empty() {
                return Err(Error::InvalidArgument("analysis needs defects or explicit footprints".into()));
            }
            let centers = sample.defects.iter().map(|d| d.center).collect();
            (footprints_from_defects(&sample, &r), centers)
        }
    };
    let depths = a.depths.clone().unwrap_or_else(|| cfg.defect_depths());
    let dilation_px = match a.dilation_px {
        Some(d) => d,
        None => {
            let probe = &cfg.named_probes()?[0].probe;
            (probe.gap_width() / r.meta.dx.min(r.meta.dy)).round() as usize
        }
    };

    let peaks = [&amplitude_contrast, &base.phi_norm, &delta, &xi]
        .iter()
        .map(|img| peaks_per_defect(img, &footprints, dilation_px, Some(&centers)))
        .collect::<Result<Vec<_>>>()?;
    let (delta_fit, amplitude_fit) = if footprints.len() >= 2 {
        let (d, a) = compare_channels(&delta, &amplitude_contrast, &footprints, &depths, dilation_px)?;
        (Some(d), Some(a))
    } else {
        (None, None)
    };
    let xi_cells = argmax_per_cell(&xi, &footprints, &centers, dilation_px)?;

    let line = match a.line.given() {
        Some(l) => *l,
        None => auto_line(&r, &centers),
    };
    let profiles = [&amplitude_contrast, &delta, &xi]
        .iter()
        .map(|img| line_profile(img, line))
        .collect::<Result<Vec<_>>>()?;
    let profile_maxima = profiles
        .iter()
        .map(|p| ProfileSummary {
            channel: p.channel.to_string(),
            maxima: local_maxima(&p.values, a.peak_prominence),
        })
        .collect();

    let signal: Footprint = {
        let mut s: Footprint = footprints.iter().flatten().copied().collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let near = {
        let mut all: Footprint = Vec::new();
        for fp in &footprints {
            all.extend(crate::analysis::dilate(fp, 2 * dilation_px.max(1), r.nx, r.ny));
        }
        all
    };
    let background: Footprint = (0..r.ny)
        .flat_map(|j| (0..r.nx).map(move |i| (i, j)))
        .filter(|p| !near.contains(p))
        .collect();
    let snr = if background.is_empty() {
        Vec::new()
    } else {
        [
            ("R", &amplitude_contrast),
            ("PHI", &base.phi_norm),
            ("DELTA", &delta),
            ("XI", &xi),
        ]
        .iter()
        .map(|(name, img)| {
            Ok(NamedSnr {
                channel: name.to_string(),
                snr: snr_db(img, &signal, &background)?,
            })
        })
        .collect::<Result<Vec<_>>>()?
    };

    let mask = match a.threshold {
        Some(t) => Some(threshold(&apply_mode(&base.r_norm, &base.phi_norm, &cfg.fusion)?, t)?),
        None => None,
    };

    let report = AnalysisReport {
        shape: [r.ny, r.nx],
        crop_margin_px: a.crop_margin_px,
        dilation_px,
        depths: depths.clone(),
        centers,
        footprint_pixels: footprints.iter().map(Vec::len).collect(),
        peaks,
        delta_rmse_not_worse: delta_fit
            .as_ref()
            .zip(amplitude_fit.as_ref())
            .map(|(d, a)| d.fit.rmse <= a.fit.rmse),
        delta_peaks_strictly_monotonic: delta_fit
            .as_ref()
            .map(|d| strictly_monotonic(&depths, &d.normalized_peaks)),
        amplitude_fit,
        delta_fit,
        xi_localizes_all: xi_cells.iter().all(|c| c.inside),
        xi_cells,
        line,
        profile_maxima,
        snr,
        threshold_pixels: mask.as_ref().map(|m| m.values.iter().filter(|&&v| v == 1.0).count()),
    };
    Ok((
        report,
        AnalysisImages {
            amplitude_contrast,
            phi_norm: base.phi_norm,
            delta,
            xi,
            profiles,
            mask,
        },
    ))
}

/// Reads `R.csv` and `PHI.csv` from `images`, analyzes them and writes the
/// JSON report to `out` and the line profiles next to it.
pub fn analyze_dir(cfg: &RunConfig, images: &Path, out: &Path) -> Result<AnalysisReport> {
    let ingested = ingest_csv(&images.join("R.csv"), &images.join("PHI.csv"))?;
    let (report, imgs) = analyze(cfg, &ingested.r, &ingested.phi)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    fs::write(out, json + "\n")?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let dir = out.parent().unwrap_or(Path::new("."));
    for p in &imgs.profiles {
        let path = dir.join(format!("{stem}_profile_{}.csv", p.channel));
        fs::write(path, crate::io::csv::format_profile(p))?;
    }
    Ok(report)
}

/// Sensitivity map at one probe position with the first configured probe.
pub fn sensitivity(cfg: &RunConfig) -> Result<(SensitivityMap, PermittivityGrid)> {
    let probe = &cfg.named_probes()?[0];
    let sample = cfg.sample_spec()?;
    let plan = cfg.scan_plan();
    let settings = cfg.solver.settings_for(&probe.probe);
    let center = cfg.sensitivity.position.unwrap_or_else(|| {
        plan.position(plan.nx_points / 2, plan.ny_points / 2)
    });
    let (grid, bc) = build_grid(&sample, &probe.probe, center, &settings.domain)?;
    let voxels = region_voxels(&grid, cfg.sensitivity.region);
    let set = match cfg.sensitivity.region {
        SensitivityRegion::Sample => SensitivitySet::Sample,
        _ => SensitivitySet::Voxels(voxels),
    };
    let map = sensitivity_map(&grid, &bc, plan.v_drive, cfg.sensitivity.delta_eps, &set, &settings.solver)?;
    Ok((map, grid))
}

/// Non-air voxels of the 2×2 columns around the probe center (`Column`), of
/// the two x–z planes through it (`XzPlane`), or all of them (`Sample`).
pub fn region_voxels(grid: &PermittivityGrid, region: SensitivityRegion) -> Vec<usize> {
    let (ci, cj) = (grid.nx / 2, grid.ny / 2);
    let keep = |i: usize, j: usize| match region {
        SensitivityRegion::Column => (i + 1 == ci || i == ci) && (j + 1 == cj || j == cj),
        SensitivityRegion::XzPlane => j + 1 == cj || j == cj,
        SensitivityRegion::Sample => true,
    };
    (0..grid.len())
        .filter(|&idx| {
            let (i, j, _) = grid.coords(idx);
            grid.material[idx] != Material::Air && keep(i, j)
        })
        .collect()
}

/// Mean sensitivity per sample layer over the perturbed voxels of the 2×2
/// center columns, from the top surface down: `(depth below surface, value)`.
pub fn center_depth_profile(map: &SensitivityMap, grid: &PermittivityGrid) -> Vec<(f64, f64)> {
    let (ci, cj) = (grid.nx / 2, grid.ny / 2);
    let mut out = Vec::new();
    for k in (0..grid.nz).rev() {
        let mut sum = 0.0;
        let mut n = 0;
        for j in [cj - 1, cj] {
            for i in [ci - 1, ci] {
                let idx = grid.index(i, j, k);
                if map.perturbed[idx] && grid.material[idx] != Material::Air {
                    sum += map.values[idx];
                    n += 1;
                }
            }
        }
        if n > 0 {
            let z = grid.node_center(ci, cj, k)[2];
            out.push((-z, sum / n as f64));
        }
    }
    out
}

/// Loads a simulated or measured image by channel name from a directory.
pub fn load_channel(dir: &Path, channel: Channel) -> Result<ScanImage> {
    Ok(read_image(&dir.join(format!("{channel}.csv")), Some(channel))?.0)
}

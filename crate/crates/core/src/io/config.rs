//! JSON run configuration.
//!
//! The document is parsed strictly: unknown keys are errors, and every error
//! carries the JSON path of the offending key (`probe.params.s`,
//! `sample.defects[2].depth`, ...). Formats are documented in `docs/formats.md`.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{Footprint, LineSpec};
use crate::error::{Error, Result};
use crate::fieldsolver::{Preconditioner, SolverConfig};
use crate::fusion::FusionConfig;
use crate::geometry::{make_back_to_back, make_concentric, DefectSpec, DomainSpec, OuterBoundary, Probe, SampleSpec, Window};
use crate::lockin::NoiseModel;
use crate::scanner::{ScanOrder, ScanPlan, ScanSettings};

fn cfg_err(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        msg: msg.into(),
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(path, format!("must be > 0, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(path, format!("must be >= 0, got {v}")))
    }
}

fn from_value<T: DeserializeOwned>(v: &Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." || inner.is_empty() {
            prefix.to_string()
        } else if prefix.is_empty() {
            inner
        } else {
            format!("{prefix}.{inner}")
        };
        cfg_err(path, e.into_inner().to_string())
    })
}

fn complex(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleDoc {
    pub width: f64,
    pub length: f64,
    pub thickness: f64,
    /// `[ε′, −ε″]`, i.e. real and imaginary parts of `ε = ε′ − jε″`.
    pub eps_r: [f64; 2],
    #[serde(default)]
    pub defects: Vec<DefectDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefectDoc {
    FlatBottomedHole {
        center: [f64; 2],
        diameter: f64,
        depth: f64,
    },
    RectVoid {
        center: [f64; 2],
        size: [f64; 2],
        depth: f64,
    },
    EllipsoidBlob {
        center: [f64; 2],
        axes: [f64; 2],
        height: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z_center: Option<f64>,
        #[serde(default = "air_eps")]
        fill_eps: [f64; 2],
    },
}

fn air_eps() -> [f64; 2] {
    [1.0, 0.0]
}

impl DefectDoc {
    fn depth(&self) -> f64 {
        match self {
            DefectDoc::FlatBottomedHole { depth, .. } | DefectDoc::RectVoid { depth, .. } => *depth,
            DefectDoc::EllipsoidBlob { height, .. } => *height,
        }
    }

    fn to_spec(&self, path: &str) -> Result<DefectSpec> {
        Ok(match self {
            DefectDoc::FlatBottomedHole { center, diameter, depth } => {
                positive(&format!("{path}.diameter"), *diameter)?;
                positive(&format!("{path}.depth"), *depth)?;
                DefectSpec::hole(*center, *diameter, *depth)
            }
            DefectDoc::RectVoid { center, size, depth } => {
                positive(&format!("{path}.size[0]"), size[0])?;
                positive(&format!("{path}.size[1]"), size[1])?;
                positive(&format!("{path}.depth"), *depth)?;
                DefectSpec::rect_void(*center, *size, *depth)
            }
            DefectDoc::EllipsoidBlob {
                center,
                axes,
                height,
                z_center,
                fill_eps,
            } => {
                positive(&format!("{path}.axes[0]"), axes[0])?;
                positive(&format!("{path}.axes[1]"), axes[1])?;
                positive(&format!("{path}.height"), *height)?;
                let mut d = DefectSpec::blob(*center, *axes, *height, complex(*fill_eps));
                d.z_center = *z_center;
                d
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeType {
    BackToBack,
    Concentric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "type")]
    pub kind: ProbeType,
    pub params: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackToBackParams {
    s: f64,
    b: f64,
    h: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct ConcentricParams {
    R1: f64,
    R2: f64,
    R3: f64,
}

impl ProbeDoc {
    fn to_probe(&self, path: &str) -> Result<Probe> {
        let pp = format!("{path}.params");
        match self.kind {
            ProbeType::BackToBack => {
                let p: BackToBackParams = from_value(&self.params, &pp)?;
                positive(&format!("{pp}.s"), p.s)?;
                positive(&format!("{pp}.b"), p.b)?;
                positive(&format!("{pp}.h"), p.h)?;
                make_back_to_back(p.s, p.b, p.h)
            }
            ProbeType::Concentric => {
                let p: ConcentricParams = from_value(&self.params, &pp)?;
                positive(&format!("{pp}.R1"), p.R1)?;
                if !(p.R2 > p.R1) {
                    return Err(cfg_err(format!("{pp}.R2"), "must exceed R1"));
                }
                if !(p.R3 > p.R2) || !p.R3.is_finite() {
                    return Err(cfg_err(format!("{pp}.R3"), "must exceed R2"));
                }
                make_concentric(p.R1, p.R2, p.R3)
            }
        }
        .map_err(|e| cfg_err(pp.clone(), e.to_string()))
    }

    fn default_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            match self.kind {
                ProbeType::BackToBack => "back_to_back",
                ProbeType::Concentric => "concentric",
            }
            .into()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDoc {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx_points: usize,
    pub ny_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift_off: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_drive: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_phase: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_periods: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs: Option<f64>,
    #[serde(default)]
    pub noise: NoiseModel,
}

impl PlanDoc {
    pub fn to_plan(&self) -> ScanPlan {
        let d = ScanPlan::default();
        ScanPlan {
            x0: self.x0,
            y0: self.y0,
            dx: self.dx,
            dy: self.dy,
            nx_points: self.nx_points,
            ny_points: self.ny_points,
            lift_off: self.lift_off.unwrap_or(d.lift_off),
            orientation: self.orientation.unwrap_or(d.orientation),
            f_in: self.f_in.unwrap_or(d.f_in),
            v_drive: self.v_drive.unwrap_or(d.v_drive),
            gain: self.gain.unwrap_or(d.gain),
            extra_phase: self.extra_phase.unwrap_or(d.extra_phase),
            n_periods: self.n_periods.unwrap_or(d.n_periods),
            fs: self.fs.unwrap_or(d.fs),
            noise: self.noise,
        }
    }

    fn validate(&self) -> Result<()> {
        let p = self.to_plan();
        for (name, v) in [
            ("dx", p.dx),
            ("dy", p.dy),
            ("f_in", p.f_in),
            ("v_drive", p.v_drive),
            ("gain", p.gain),
            ("fs", p.fs),
        ] {
            positive(&format!("plan.{name}"), v)?;
        }
        non_negative("plan.lift_off", p.lift_off)?;
        non_negative("plan.noise.sigma", p.noise.sigma)?;
        if p.nx_points == 0 {
            return Err(cfg_err("plan.nx_points", "must be >= 1"));
        }
        if p.ny_points == 0 {
            return Err(cfg_err("plan.ny_points", "must be >= 1"));
        }
        if p.n_periods == 0 {
            return Err(cfg_err("plan.n_periods", "must be >= 1"));
        }
        if !(p.fs > 2.0 * p.f_in) {
            return Err(cfg_err("plan.fs", "must exceed twice f_in"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverDoc {
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
    /// Voxels per meter.
    pub resolution: f64,
    /// Lateral air margin; `null` selects the probe-dependent default.
    pub padding: Option<f64>,
    pub air_below: f64,
    pub shield: bool,
    pub outer: OuterBoundary,
    pub window: Window,
    pub warm_start: bool,
    pub order: ScanOrder,
}

impl Default for SolverDoc {
    fn default() -> Self {
        let s = SolverConfig::default();
        SolverDoc {
            tol: s.tol,
            max_iter: s.max_iter,
            preconditioner: s.preconditioner,
            resolution: 1000.0,
            padding: None,
            air_below: 4e-3,
            shield: true,
            outer: OuterBoundary::Neumann,
            window: Window::ProbeCentered,
            warm_start: true,
            order: ScanOrder::RowMajor,
        }
    }
}

impl SolverDoc {
    fn validate(&self) -> Result<()> {
        positive("solver.tol", self.tol)?;
        positive("solver.resolution", self.resolution)?;
        non_negative("solver.air_below", self.air_below)?;
        if let Some(p) = self.padding {
            non_negative("solver.padding", p)?;
        }
        if self.max_iter == 0 {
            return Err(cfg_err("solver.max_iter", "must be >= 1"));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            preconditioner: self.preconditioner,
        }
    }

    /// Scan settings for `probe` (already carrying its lift-off).
    pub fn settings_for(&self, probe: &Probe) -> ScanSettings {
        ScanSettings {
            domain: DomainSpec {
                resolution: self.resolution,
                padding: self.padding.unwrap_or_else(|| DomainSpec::default_padding(probe)),
                air_below: self.air_below,
                shield: self.shield,
                outer: self.outer,
                window: self.window,
            },
            solver: self.solver_config(),
            warm_start: self.warm_start,
            order: self.order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Auto<T> {
    Keyword(AutoKeyword),
    Given(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

impl<T> Default for Auto<T> {
    fn default() -> Self {
        Auto::Keyword(AutoKeyword::Auto)
    }
}

impl<T> Auto<T> {
    pub fn given(&self) -> Option<&T> {
        match self {
            Auto::Given(t) => Some(t),
            Auto::Keyword(_) => None,
        }
    }
}

/// How defect peaks are read from the amplitude image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeContrast {
    /// Defects lower R; peaks are taken on `1 − R_norm`.
    #[default]
    Dip,
    /// Defects raise R; peaks are taken on `R_norm`.
    Peak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisDoc {
    /// `"auto"` (from the sample's defects) or explicit pixel lists `[[i, j], ...]`.
    pub footprints: Auto<Vec<Vec<[usize; 2]>>>,
    /// Footprint dilation; `null` uses the probe's electrode gap in pixels.
    pub dilation_px: Option<usize>,
    /// `"auto"` (the row or column through the defect centers) or a line spec.
    pub line: Auto<LineSpec>,
    pub crop_margin_px: usize,
    pub threshold: Option<f64>,
    /// Depth per footprint; `null` uses the configured defect depths.
    pub depths: Option<Vec<f64>>,
    pub amplitude_contrast: AmplitudeContrast,
    /// Minimum prominence of line-profile maxima counted as defect peaks.
    pub peak_prominence: f64,
}

impl Default for AnalysisDoc {
    fn default() -> Self {
        AnalysisDoc {
            footprints: Auto::default(),
            dilation_px: None,
            line: Auto::default(),
            crop_margin_px: 0,
            threshold: None,
            depths: None,
            amplitude_contrast: AmplitudeContrast::Dip,
            peak_prominence: 0.05,
        }
    }
}

impl AnalysisDoc {
    pub fn explicit_footprints(&self) -> Option<Vec<Footprint>> {
        self.footprints
            .given()
            .map(|fps| fps.iter().map(|fp| fp.iter().map(|p| (p[0], p[1])).collect()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityRegion {
    /// Sample voxels in the 2×2 voxel columns around the probe center.
    #[default]
    Column,
    /// Sample voxels in the two x–z voxel planes around the probe center.
    XzPlane,
    /// Every sample voxel of the local grid.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityDoc {
    pub delta_eps: f64,
    /// Probe center; `null` uses the middle of the scan grid.
    pub position: Option<[f64; 2]>,
    pub region: SensitivityRegion,
}

impl Default for SensitivityDoc {
    fn default() -> Self {
        SensitivityDoc {
            delta_eps: 0.01,
            position: None,
            region: SensitivityRegion::Column,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Pgm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputDoc {
    pub formats: Vec<OutputFormat>,
    pub pgm_bit_depth: u8,
}

impl Default for OutputDoc {
    fn default() -> Self {
        OutputDoc {
            formats: vec![OutputFormat::Csv, OutputFormat::Pgm],
            pgm_bit_depth: 8,
        }
    }
}

/// Validated run configuration. Field names match the JSON keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sample: SampleDoc,
    /// Single probe. Exactly one of `probe` and `probes` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<ProbeDoc>>,
    pub plan: PlanDoc,
    #[serde(default)]
    pub solver: SolverDoc,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub analysis: AnalysisDoc,
    #[serde(default)]
    pub sensitivity: SensitivityDoc,
    #[serde(default)]
    pub output: OutputDoc,
}

/// A configured probe with its output name; lift-off and orientation already
/// taken from the scan plan.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedProbe {
    pub name: String,
    pub probe: Probe,
}

// Per-kind mirrors of `DefectDoc`. The tagged enum buffers its content, so
// its errors stop at `sample.defects[k]`; these report the offending key.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct HoleFields {
    kind: String,
    center: [f64; 2],
    diameter: f64,
    depth: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct VoidFields {
    kind: String,
    center: [f64; 2],
    size: [f64; 2],
    depth: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct BlobFields {
    kind: String,
    center: [f64; 2],
    axes: [f64; 2],
    height: f64,
    z_center: Option<f64>,
    fill_eps: Option<[f64; 2]>,
}

fn check_defect_fields(value: &Value) -> Result<()> {
    let Some(defects) = value.pointer("/sample/defects").and_then(Value::as_array) else {
        return Ok(());
    };
    for (k, d) in defects.iter().enumerate() {
        let path = format!("sample.defects[{k}]");
        match d.get("kind").and_then(Value::as_str) {
            Some("flat_bottomed_hole") => drop(from_value::<HoleFields>(d, &path)?),
            Some("rect_void") => drop(from_value::<VoidFields>(d, &path)?),
            Some("ellipsoid_blob") => drop(from_value::<BlobFields>(d, &path)?),
            _ => {}
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let value: Value = serde_json::from_str(text).map_err(|e| cfg_err(".", e.to_string()))?;
        check_defect_fields(&value)?;
        let cfg: RunConfig = from_value(&value, "")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.sample_spec()?;
        self.plan.validate()?;
        self.named_probes()?;
        self.solver.validate()?;
        self.fusion
            .validate()
            .map_err(|e| cfg_err("fusion.xi_guard", e.to_string()))?;
        if let Some(d) = &self.analysis.depths {
            if !self.analysis.footprints.given().is_some_and(|f| f.len() == d.len())
                && d.len() != self.sample.defects.len()
            {
                return Err(cfg_err("analysis.depths", "need one depth per footprint"));
            }
        }
        if let Some(fps) = self.analysis.footprints.given() {
            if let Some(k) = fps.iter().position(|f| f.is_empty()) {
                return Err(cfg_err(format!("analysis.footprints[{k}]"), "footprint is empty"));
            }
        }
        positive("sensitivity.delta_eps", self.sensitivity.delta_eps)?;
        if !matches!(self.output.pgm_bit_depth, 8 | 16) {
            return Err(cfg_err("output.pgm_bit_depth", "must be 8 or 16"));
        }
        Ok(())
    }

    pub fn sample_spec(&self) -> Result<SampleSpec> {
        let s = &self.sample;
        positive("sample.width", s.width)?;
        positive("sample.length", s.length)?;
        positive("sample.thickness", s.thickness)?;
        if !(s.eps_r[0] >= 1.0) || !(s.eps_r[1] <= 0.0) {
            return Err(cfg_err("sample.eps_r", "need eps' >= 1 and imaginary part <= 0"));
        }
        let mut spec = SampleSpec::homogeneous(s.width, s.length, s.thickness, complex(s.eps_r));
        for (k, d) in s.defects.iter().enumerate() {
            spec.defects.push(d.to_spec(&format!("sample.defects[{k}]"))?);
        }
        spec.validate().map_err(|e| {
            let path = match &e {
                Error::Bounds(m) | Error::InvalidGeometry(m) => m
                    .split(':')
                    .next()
                    .filter(|p| p.starts_with("defects["))
                    .map_or("sample".to_string(), |p| format!("sample.{p}")),
                _ => "sample".to_string(),
            };
            cfg_err(path, e.to_string())
        })?;
        Ok(spec)
    }

    pub fn defect_depths(&self) -> Vec<f64> {
        self.sample.defects.iter().map(DefectDoc::depth).collect()
    }

    pub fn scan_plan(&self) -> ScanPlan {
        self.plan.to_plan()
    }

    pub fn named_probes(&self) -> Result<Vec<NamedProbe>> {
        let docs: Vec<(String, &ProbeDoc)> = match (&self.probe, &self.probes) {
            (Some(p), None) => vec![("probe".to_string(), p)],
            (None, Some(list)) if !list.is_empty() => list
                .iter()
                .enumerate()
                .map(|(k, p)| (format!("probes[{k}]"), p))
                .collect(),
            (None, Some(_)) => return Err(cfg_err("probes", "list is empty")),
            (None, None) => return Err(cfg_err("probe", "missing probe definition")),
            (Some(_), Some(_)) => return Err(cfg_err("probes", "give either `probe` or `probes`, not both")),
        };
        let plan = self.scan_plan();
        let mut out: Vec<NamedProbe> = Vec::new();
        for (path, doc) in docs {
            let probe = doc
                .to_probe(&path)?
                .with_lift_off(plan.lift_off)
                .with_orientation(plan.orientation);
            let name = doc.default_name();
            if out.iter().any(|p| p.name == name) {
                return Err(cfg_err(format!("{path}.name"), format!("duplicate probe name `{name}`")));
            }
            out.push(NamedProbe { name, probe });
        }
        Ok(out)
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    RunConfig::from_json(&text).map_err(|e| match e {
        Error::Config { path: p, msg } => Error::Config {
            path: p,
            msg: format!("{msg} (in {})", path.display()),
        },
        other => other,
    })
}

//! Sample and probe models, and their rasterization onto the simulation lattice.
//!
//! Coordinates: the sample occupies `x ∈ [0, width]`, `y ∈ [0, length]` and
//! `z ∈ [-thickness, 0]`, so its probed (top) surface is the plane `z = 0`.
//! The probe sits above it at `z = lift_off`. Lattice nodes are voxel centers;
//! node `(i, j, k)` sits at `origin + (i + ½, j + ½, k + ½)·h`.
//!
//! Electrodes are zero-thickness conductors occupying a single node plane.
//! Lift-off is measured from the sample surface to the underside of that
//! voxel layer, so `round(lift_off / h)` air layers separate the two.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EPS_GEOM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefectKind {
    /// Cylindrical hole milled from the back surface up to `depth`.
    FlatBottomedHole,
    /// Rectangular pocket milled from the back surface up to `depth`.
    RectVoid,
    /// Ellipsoid fully enclosed in the slab; `depth` is its vertical extent.
    EllipsoidBlob,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefectSpec {
    pub kind: DefectKind,
    /// Lateral center (x, y) in meters.
    pub center: [f64; 2],
    /// Diameter (both entries equal) for holes, edge lengths for voids,
    /// full lateral axes for blobs.
    pub lateral_size: [f64; 2],
    pub depth: f64,
    /// Vertical center of a blob (`z ∈ [-thickness, 0]`). Defaults to mid-thickness.
    pub z_center: Option<f64>,
    pub fill_eps: Complex64,
}

impl DefectSpec {
    pub fn hole(center: [f64; 2], diameter: f64, depth: f64) -> Self {
        DefectSpec {
            kind: DefectKind::FlatBottomedHole,
            center,
            lateral_size: [diameter, diameter],
            depth,
            z_center: None,
            fill_eps: Complex64::new(1.0, 0.0),
        }
    }

    pub fn rect_void(center: [f64; 2], size: [f64; 2], depth: f64) -> Self {
        DefectSpec {
            kind: DefectKind::RectVoid,
            center,
            lateral_size: size,
            depth,
            z_center: None,
            fill_eps: Complex64::new(1.0, 0.0),
        }
    }

    pub fn blob(center: [f64; 2], axes: [f64; 2], height: f64, fill_eps: Complex64) -> Self {
        DefectSpec {
            kind: DefectKind::EllipsoidBlob,
            center,
            lateral_size: axes,
            depth: height,
            z_center: None,
            fill_eps,
        }
    }

    fn z_range(&self, thickness: f64) -> (f64, f64) {
        match self.kind {
            DefectKind::FlatBottomedHole | DefectKind::RectVoid => {
                (-thickness, -thickness + self.depth)
            }
            DefectKind::EllipsoidBlob => {
                let zc = self.z_center.unwrap_or(-thickness / 2.0);
                (zc - self.depth / 2.0, zc + self.depth / 2.0)
            }
        }
    }

    fn validate(&self, index: usize, sample: &SampleSpec) -> Result<()> {
        let name = format!("defects[{index}]");
        if !(self.depth > 0.0) || !self.depth.is_finite() {
            return Err(Error::InvalidGeometry(format!("{name}: depth must be > 0")));
        }
        if self.depth > sample.thickness * (1.0 + EPS_GEOM) {
            return Err(Error::Bounds(format!(
                "{name}: depth {} exceeds sample thickness {}",
                self.depth, sample.thickness
            )));
        }
        if self.lateral_size.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidGeometry(format!("{name}: lateral_size must be > 0")));
        }
        if self.kind == DefectKind::FlatBottomedHole
            && (self.lateral_size[0] - self.lateral_size[1]).abs() > EPS_GEOM
        {
            return Err(Error::InvalidGeometry(format!(
                "{name}: a flat-bottomed hole has a single diameter"
            )));
        }
        if !(self.fill_eps.re > 0.0) || !self.fill_eps.im.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "{name}: fill permittivity must have a positive real part"
            )));
        }
        let [cx, cy] = self.center;
        let [hx, hy] = [self.lateral_size[0] / 2.0, self.lateral_size[1] / 2.0];
        let tol = EPS_GEOM * (sample.width + sample.length);
        if cx - hx < -tol
            || cx + hx > sample.width + tol
            || cy - hy < -tol
            || cy + hy > sample.length + tol
        {
            return Err(Error::Bounds(format!("{name}: lateral footprint leaves the sample")));
        }
        let (z0, z1) = self.z_range(sample.thickness);
        if z0 < -sample.thickness * (1.0 + EPS_GEOM) || z1 > EPS_GEOM * sample.thickness {
            return Err(Error::Bounds(format!("{name}: vertical extent leaves the sample")));
        }
        Ok(())
    }

    /// Center-in-shape test for a point in sample coordinates.
    pub fn contains(&self, p: [f64; 3], thickness: f64) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let (z0, z1) = self.z_range(thickness);
        match self.kind {
            DefectKind::FlatBottomedHole => {
                let r = self.lateral_size[0] / 2.0;
                p[2] >= z0 && p[2] <= z1 && dx * dx + dy * dy <= r * r
            }
            DefectKind::RectVoid => {
                p[2] >= z0
                    && p[2] <= z1
                    && dx.abs() <= self.lateral_size[0] / 2.0
                    && dy.abs() <= self.lateral_size[1] / 2.0
            }
            DefectKind::EllipsoidBlob => {
                let ax = self.lateral_size[0] / 2.0;
                let ay = self.lateral_size[1] / 2.0;
                let az = self.depth / 2.0;
                let dz = p[2] - (z0 + z1) / 2.0;
                (dx / ax).powi(2) + (dy / ay).powi(2) + (dz / az).powi(2) <= 1.0
            }
        }
    }
}

/// Dielectric slab with embedded defects. Permittivity uses `ε = ε′ − jε″`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpec {
    pub width: f64,
    pub length: f64,
    pub thickness: f64,
    pub eps_r: Complex64,
    pub defects: Vec<DefectSpec>,
}

impl SampleSpec {
    pub fn homogeneous(width: f64, length: f64, thickness: f64, eps_r: Complex64) -> Self {
        SampleSpec {
            width,
            length,
            thickness,
            eps_r,
            defects: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("width", self.width),
            ("length", self.length),
            ("thickness", self.thickness),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidGeometry(format!("sample {name} must be > 0")));
            }
        }
        if !(self.eps_r.re >= 1.0) || !(self.eps_r.im <= 0.0) {
            return Err(Error::InvalidGeometry(
                "sample eps_r needs Re >= 1 and Im <= 0".into(),
            ));
        }
        for (i, d) in self.defects.iter().enumerate() {
            d.validate(i, self)?;
        }
        Ok(())
    }

    fn inside(&self, p: [f64; 3]) -> bool {
        p[0] >= 0.0
            && p[0] <= self.width
            && p[1] >= 0.0
            && p[1] <= self.length
            && p[2] >= -self.thickness
            && p[2] <= 0.0
    }

    /// Material label and permittivity at a point. Later defects win on overlap.
    pub fn material_at(&self, p: [f64; 3]) -> (Material, Complex64) {
        if !self.inside(p) {
            return (Material::Air, Complex64::new(1.0, 0.0));
        }
        for (i, d) in self.defects.iter().enumerate().rev() {
            if d.contains(p, self.thickness) {
                return (Material::Defect(i as u16), d.fill_eps);
            }
        }
        (Material::Sample, self.eps_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeShape {
    /// Two coplanar plates, `b` across and `h` along the main axis, separated
    /// by a gap `s` along it.
    /// The drive plate sits on the negative side of the main axis.
    BackToBack { s: f64, b: f64, h: f64 },
    /// Drive disc of radius `r1` inside a sense annulus `r2..r3`.
    Concentric { r1: f64, r2: f64, r3: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElectrodeRole {
    Drive,
    Sense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub shape: ProbeShape,
    pub lift_off: f64,
    /// Rotation of the main axis from +x, radians.
    pub orientation: f64,
}

pub fn make_back_to_back(s: f64, b: f64, h: f64) -> Result<Probe> {
    let probe = Probe {
        shape: ProbeShape::BackToBack { s, b, h },
        lift_off: 0.0,
        orientation: 0.0,
    };
    probe.validate()?;
    Ok(probe)
}

pub fn make_concentric(r1: f64, r2: f64, r3: f64) -> Result<Probe> {
    let probe = Probe {
        shape: ProbeShape::Concentric { r1, r2, r3 },
        lift_off: 0.0,
        orientation: 0.0,
    };
    probe.validate()?;
    Ok(probe)
}

impl Probe {
    pub fn with_lift_off(mut self, lift_off: f64) -> Self {
        self.lift_off = lift_off;
        self
    }

    pub fn with_orientation(mut self, orientation: f64) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.shape {
            ProbeShape::BackToBack { s, b, h } => {
                for (name, v) in [("s", s), ("b", b), ("h", h)] {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::InvalidGeometry(format!(
                            "back-to-back parameter {name} must be > 0, got {v}"
                        )));
                    }
                }
            }
            ProbeShape::Concentric { r1, r2, r3 } => {
                if !(r1 > 0.0 && r1 < r2 && r2 < r3 && r3.is_finite()) {
                    return Err(Error::InvalidGeometry(format!(
                        "concentric radii need 0 < R1 < R2 < R3, got {r1}, {r2}, {r3}"
                    )));
                }
            }
        }
        if !(self.lift_off >= 0.0) || !self.lift_off.is_finite() {
            return Err(Error::InvalidGeometry("lift_off must be >= 0".into()));
        }
        if !self.orientation.is_finite() {
            return Err(Error::InvalidGeometry("orientation must be finite".into()));
        }
        Ok(())
    }

    /// Smallest dimensions that the lattice must resolve.
    fn features(&self) -> Vec<(&'static str, f64)> {
        match self.shape {
            ProbeShape::BackToBack { s, b, h } => vec![("probe gap s", s), ("probe b", b), ("probe h", h)],
            ProbeShape::Concentric { r1, r2, r3 } => vec![
                ("probe R1", r1),
                ("probe gap R2-R1", r2 - r1),
                ("probe annulus R3-R2", r3 - r2),
            ],
        }
    }

    /// Width of the insulating gap between drive and sense electrodes.
    pub fn gap_width(&self) -> f64 {
        match self.shape {
            ProbeShape::BackToBack { s, .. } => s,
            ProbeShape::Concentric { r1, r2, .. } => r2 - r1,
        }
    }

    /// Half extents of the axis-aligned bounding box of the electrode footprint.
    pub fn half_extent(&self) -> [f64; 2] {
        match self.shape {
            ProbeShape::BackToBack { s, b, h } => {
                let hu = s / 2.0 + h;
                let hv = b / 2.0;
                let (sin, cos) = self.orientation.sin_cos();
                [
                    hu * cos.abs() + hv * sin.abs(),
                    hu * sin.abs() + hv * cos.abs(),
                ]
            }
            ProbeShape::Concentric { r3, .. } => [r3, r3],
        }
    }

    /// Electrode under a point given relative to the probe center.
    pub fn role_at(&self, dx: f64, dy: f64) -> Option<ElectrodeRole> {
        match self.shape {
            ProbeShape::BackToBack { s, b, h } => {
                let (sin, cos) = self.orientation.sin_cos();
                let u = dx * cos + dy * sin;
                let v = -dx * sin + dy * cos;
                if v.abs() > b / 2.0 {
                    return None;
                }
                if u <= -s / 2.0 && u >= -s / 2.0 - h {
                    Some(ElectrodeRole::Drive)
                } else if u >= s / 2.0 && u <= s / 2.0 + h {
                    Some(ElectrodeRole::Sense)
                } else {
                    None
                }
            }
            ProbeShape::Concentric { r1, r2, r3 } => {
                // Radially symmetric, so orientation is ignored.
                let r2_ = dx * dx + dy * dy;
                if r2_ <= r1 * r1 {
                    Some(ElectrodeRole::Drive)
                } else if r2_ >= r2 * r2 && r2_ <= r3 * r3 {
                    Some(ElectrodeRole::Sense)
                } else {
                    None
                }
            }
        }
    }
}

/// Material label of a voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Material {
    Air,
    Sample,
    Defect(u16),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermittivityGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Voxel edge length, meters.
    pub h: f64,
    /// Lower corner of voxel (0, 0, 0).
    pub origin: [f64; 3],
    /// Relative permittivity per voxel, index `(k·ny + j)·nx + i`.
    pub eps: Vec<Complex64>,
    pub material: Vec<Material>,
}

impl PermittivityGrid {
    /// Grid with a single permittivity everywhere, labelled as sample material.
    pub fn uniform(nx: usize, ny: usize, nz: usize, h: f64, eps: Complex64) -> Self {
        let n = nx * ny * nz;
        PermittivityGrid {
            nx,
            ny,
            nz,
            h,
            origin: [0.0; 3],
            eps: vec![eps; n],
            material: vec![Material::Sample; n],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    pub fn node_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
            self.origin[2] + (k as f64 + 0.5) * self.h,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.len() != self.len() || self.material.len() != self.len() {
            return Err(Error::InvalidArgument("grid arrays do not match dimensions".into()));
        }
        if let Some(bad) = self
            .eps
            .iter()
            .position(|e| !(e.re > 0.0) || !e.re.is_finite() || !e.im.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "voxel {bad} has non-finite or non-positive permittivity"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Free,
    Drive,
    Sense,
    Shield,
    /// Outer-boundary node held at 0 V (Dirichlet outer boundary only).
    Outer,
}

impl NodeRole {
    pub fn is_fixed(self) -> bool {
        self != NodeRole::Free
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBoundary {
    /// Zero normal flux across the domain boundary.
    #[default]
    Neumann,
    /// Outermost node layer held at 0 V.
    DirichletZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditions {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub roles: Vec<NodeRole>,
    /// Layer index of the electrode plane, when built from a probe.
    pub electrode_layer: Option<usize>,
}

impl BoundaryConditions {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        BoundaryConditions {
            nx,
            ny,
            nz,
            roles: vec![NodeRole::Free; nx * ny * nz],
            electrode_layer: None,
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, role: NodeRole) {
        let idx = self.index(i, j, k);
        self.roles[idx] = role;
    }

    pub fn count(&self, role: NodeRole) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    /// Holds every node of the outer lattice layer at 0 V unless it is
    /// already an electrode.
    pub fn ground_outer_layer(&mut self) {
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    let on_edge = i == 0
                        || j == 0
                        || k == 0
                        || i + 1 == self.nx
                        || j + 1 == self.ny
                        || k + 1 == self.nz;
                    let idx = self.index(i, j, k);
                    if on_edge && self.roles[idx] == NodeRole::Free {
                        self.roles[idx] = NodeRole::Outer;
                    }
                }
            }
        }
    }

    /// Exchanges the drive and sense node sets.
    pub fn swapped_roles(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.roles {
            *r = match *r {
                NodeRole::Drive => NodeRole::Sense,
                NodeRole::Sense => NodeRole::Drive,
                other => other,
            };
        }
        out
    }

    pub fn validate_for(&self, grid: &PermittivityGrid) -> Result<()> {
        if (self.nx, self.ny, self.nz) != (grid.nx, grid.ny, grid.nz)
            || self.roles.len() != grid.len()
        {
            return Err(Error::InvalidBoundary(
                "boundary conditions do not match grid dimensions".into(),
            ));
        }
        if self.count(NodeRole::Drive) == 0 {
            return Err(Error::InvalidBoundary("no drive nodes".into()));
        }
        if self.count(NodeRole::Sense) == 0 {
            return Err(Error::InvalidBoundary("no sense nodes".into()));
        }
        Ok(())
    }
}

/// Lateral extent of the simulated domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Probe-centered domain of fixed size: probe footprint plus padding.
    #[default]
    ProbeCentered,
    /// Whole sample plus padding on every side.
    WholeSample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    /// Voxels per meter.
    pub resolution: f64,
    /// Lateral air margin around the probe footprint (or sample), meters.
    pub padding: f64,
    /// Air below the sample's back surface, meters.
    pub air_below: f64,
    /// Grounded plane one voxel above the electrodes.
    pub shield: bool,
    pub outer: OuterBoundary,
    pub window: Window,
}

impl DomainSpec {
    pub fn voxel(&self) -> f64 {
        1.0 / self.resolution
    }

    /// Default padding rule: at least the largest probe half-extent and three lift-offs.
    pub fn default_padding(probe: &Probe) -> f64 {
        let [hx, hy] = probe.half_extent();
        hx.max(hy).max(3.0 * probe.lift_off)
    }
}

fn check_resolved(name: &str, size: f64, h: f64) -> Result<()> {
    let voxels = size / h;
    if voxels < 2.0 - 1e-9 {
        return Err(Error::Resolution {
            feature: name.to_string(),
            voxels,
        });
    }
    Ok(())
}

fn voxel_count(length: f64, h: f64) -> usize {
    ((length / h) - 1e-9).ceil().max(1.0) as usize
}

/// Rasterizes the sample and the probe (centered at `center`) onto a lattice.
pub fn build_grid(
    sample: &SampleSpec,
    probe: &Probe,
    center: [f64; 2],
    domain: &DomainSpec,
) -> Result<(PermittivityGrid, BoundaryConditions)> {
    sample.validate()?;
    probe.validate()?;
    if !(domain.resolution > 0.0) || !domain.resolution.is_finite() {
        return Err(Error::InvalidArgument("resolution must be > 0".into()));
    }
    if !(domain.padding >= 0.0) || !(domain.air_below >= 0.0) {
        return Err(Error::InvalidArgument("padding and air_below must be >= 0".into()));
    }
    let h = domain.voxel();
    for (name, size) in probe.features() {
        check_resolved(name, size, h)?;
    }
    for (i, d) in sample.defects.iter().enumerate() {
        let min_lateral = d.lateral_size[0].min(d.lateral_size[1]);
        check_resolved(&format!("defects[{i}] lateral size"), min_lateral, h)?;
        check_resolved(&format!("defects[{i}] depth"), d.depth, h)?;
    }

    let half = probe.half_extent();
    let (nx, ny, ox, oy) = match domain.window {
        Window::ProbeCentered => {
            let hx = voxel_count(half[0] + domain.padding, h);
            let hy = voxel_count(half[1] + domain.padding, h);
            (
                2 * hx,
                2 * hy,
                center[0] - hx as f64 * h,
                center[1] - hy as f64 * h,
            )
        }
        Window::WholeSample => {
            let nx = voxel_count(sample.width + 2.0 * domain.padding, h);
            let ny = voxel_count(sample.length + 2.0 * domain.padding, h);
            let (ox, oy) = (-domain.padding, -domain.padding);
            let tol = 1e-9 * h;
            if center[0] - half[0] < ox - tol
                || center[0] + half[0] > ox + nx as f64 * h + tol
                || center[1] - half[1] < oy - tol
                || center[1] + half[1] > oy + ny as f64 * h + tol
            {
                return Err(Error::Bounds("probe footprint leaves the simulated domain".into()));
            }
            (nx, ny, ox, oy)
        }
    };

    let n_under = voxel_count(sample.thickness + domain.air_below, h);
    let n_lift = (probe.lift_off / h).round() as usize;
    let k_e = n_under + n_lift;
    let nz = if domain.shield {
        k_e + 2
    } else {
        k_e + 1 + voxel_count(domain.padding.max(h), h)
    };
    let origin = [ox, oy, -(n_under as f64) * h];

    let n = nx * ny * nz;
    let mut grid = PermittivityGrid {
        nx,
        ny,
        nz,
        h,
        origin,
        eps: vec![Complex64::new(1.0, 0.0); n],
        material: vec![Material::Air; n],
    };
    // Material only exists below the sample top, i.e. below layer n_under.
    for k in 0..n_under.min(nz) {
        for j in 0..ny {
            for i in 0..nx {
                let p = grid.node_center(i, j, k);
                let (m, e) = sample.material_at(p);
                let idx = grid.index(i, j, k);
                grid.material[idx] = m;
                grid.eps[idx] = e;
            }
        }
    }

    let mut bc = BoundaryConditions::new(nx, ny, nz);
    bc.electrode_layer = Some(k_e);
    for j in 0..ny {
        for i in 0..nx {
            let p = grid.node_center(i, j, k_e);
            if let Some(role) = probe.role_at(p[0] - center[0], p[1] - center[1]) {
                bc.set(
                    i,
                    j,
                    k_e,
                    match role {
                        ElectrodeRole::Drive => NodeRole::Drive,
                        ElectrodeRole::Sense => NodeRole::Sense,
                    },
                );
            }
        }
    }
    if domain.shield {
        for j in 0..ny {
            for i in 0..nx {
                bc.set(i, j, k_e + 1, NodeRole::Shield);
            }
        }
    }
    if domain.outer == OuterBoundary::DirichletZero {
        bc.ground_outer_layer();
    }
    bc.validate_for(&grid)?;
    Ok((grid, bc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn domain(resolution: f64, padding: f64) -> DomainSpec {
        DomainSpec {
            resolution,
            padding,
            air_below: 0.002,
            shield: true,
            outer: OuterBoundary::Neumann,
            window: Window::ProbeCentered,
        }
    }

    #[test]
    fn reference_probes_construct() {
        let p = make_back_to_back(0.004, 0.016, 0.019).unwrap();
        assert_eq!(
            p.shape,
            ProbeShape::BackToBack {
                s: 0.004,
                b: 0.016,
                h: 0.019
            }
        );
        let c = make_concentric(0.008, 0.016, 0.024).unwrap();
        assert_eq!(c.role_at(0.0, 0.0), Some(ElectrodeRole::Drive));
        assert_eq!(c.role_at(0.02, 0.0), Some(ElectrodeRole::Sense));
        assert_eq!(c.role_at(0.012, 0.0), None);
    }

    #[test]
    fn invalid_probes_rejected() {
        assert!(matches!(
            make_back_to_back(0.0, 0.016, 0.019),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            make_back_to_back(0.004, -1.0, 0.019),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            make_concentric(0.016, 0.008, 0.024),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            make_concentric(0.008, 0.016, 0.016),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn mirrored_back_to_back_swaps_roles() {
        let p = make_back_to_back(0.004, 0.016, 0.019).unwrap();
        for &(u, v) in &[(0.005, 0.0), (0.012, 0.007), (-0.02, -0.003), (0.001, 0.0)] {
            let a = p.role_at(u, v);
            let b = p.role_at(-u, v);
            match a {
                Some(ElectrodeRole::Drive) => assert_eq!(b, Some(ElectrodeRole::Sense)),
                Some(ElectrodeRole::Sense) => assert_eq!(b, Some(ElectrodeRole::Drive)),
                None => assert_eq!(b, None),
            }
        }
    }

    #[test]
    fn gap_spans_four_voxels_at_quarter_gap_resolution() {
        let s = 0.004;
        let p = make_back_to_back(s, 0.016, 0.019).unwrap().with_lift_off(0.002);
        let sample = SampleSpec::homogeneous(0.2, 0.2, 0.004, c(2.7, 0.0));
        let (_, bc) = build_grid(&sample, &p, [0.1, 0.1], &domain(4.0 / s, 0.01)).unwrap();
        let k = bc.electrode_layer.unwrap();
        let j = bc.ny / 2;
        let row: Vec<NodeRole> = (0..bc.nx).map(|i| bc.roles[bc.index(i, j, k)]).collect();
        let last_drive = row.iter().rposition(|&r| r == NodeRole::Drive).unwrap();
        let first_sense = row.iter().position(|&r| r == NodeRole::Sense).unwrap();
        assert_eq!(first_sense - last_drive - 1, 4);
    }

    #[test]
    fn concentric_area_ratio_matches_analytic() {
        let (r1, r2, r3) = (0.008, 0.016, 0.024);
        let p = make_concentric(r1, r2, r3).unwrap();
        let sample = SampleSpec::homogeneous(0.2, 0.2, 0.004, c(2.7, 0.0));
        let res = 2000.0;
        let h = 1.0 / res;
        let (_, bc) = build_grid(&sample, &p, [0.1, 0.1], &domain(res, 0.004)).unwrap();
        let drive = bc.count(NodeRole::Drive) as f64;
        let sense = bc.count(NodeRole::Sense) as f64;
        let analytic = (r3 * r3 - r2 * r2) / (r1 * r1);
        // One voxel-perimeter worth of cells on each boundary.
        let pi = std::f64::consts::PI;
        let drive_err = 2.0 * pi * r1 / h;
        let sense_err = 2.0 * pi * (r2 + r3) / h;
        let lo = (pi * (r3 * r3 - r2 * r2) / (h * h) - sense_err) / (pi * r1 * r1 / (h * h) + drive_err);
        let hi = (pi * (r3 * r3 - r2 * r2) / (h * h) + sense_err) / (pi * r1 * r1 / (h * h) - drive_err);
        let ratio = sense / drive;
        assert!(ratio > lo && ratio < hi, "ratio {ratio} analytic {analytic}");
        assert!((ratio - analytic).abs() / analytic < 0.05);
    }

    #[test]
    fn concentric_rasterization_ignores_rotation() {
        let p = make_concentric(0.008, 0.016, 0.024).unwrap();
        let sample = SampleSpec::homogeneous(0.2, 0.2, 0.004, c(2.7, 0.0));
        let d = domain(1000.0, 0.004);
        let a = build_grid(&sample, &p, [0.1, 0.1], &d).unwrap();
        let b = build_grid(&sample, &p.with_orientation(0.7), [0.1, 0.1], &d).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn homogeneous_slab_has_two_permittivities() {
        let p = make_back_to_back(0.004, 0.016, 0.019).unwrap().with_lift_off(0.003);
        let eps = c(2.7, -0.027);
        let sample = SampleSpec::homogeneous(0.1, 0.1, 0.01, eps);
        let (grid, _) = build_grid(&sample, &p, [0.05, 0.05], &domain(1000.0, 0.01)).unwrap();
        let mut distinct: Vec<Complex64> = Vec::new();
        for e in &grid.eps {
            if !distinct.contains(e) {
                distinct.push(*e);
            }
        }
        assert_eq!(distinct.len(), 2);
        assert!(distinct.contains(&eps) && distinct.contains(&c(1.0, 0.0)));
    }

    #[test]
    fn hole_column_height_counts_voxels() {
        let res = 1000.0;
        let depth = 0.006;
        let p = make_back_to_back(0.004, 0.016, 0.019).unwrap().with_lift_off(0.003);
        let mut sample = SampleSpec::homogeneous(0.1, 0.1, 0.01, c(2.7, 0.0));
        sample.defects.push(DefectSpec::hole([0.05, 0.05], 0.008, depth));
        let (grid, _) = build_grid(&sample, &p, [0.05, 0.05], &domain(res, 0.01)).unwrap();
        // Column at the voxel just off the hole axis.
        let i = grid.nx / 2;
        let j = grid.ny / 2;
        let air_in_sample = (0..grid.nz)
            .filter(|&k| {
                let idx = grid.index(i, j, k);
                grid.material[idx] == Material::Defect(0)
            })
            .count();
        assert_eq!(air_in_sample, (depth * res).round() as usize);
        // The defect column starts at the back surface.
        let z_first = (0..grid.nz)
            .find(|&k| grid.material[grid.index(i, j, k)] == Material::Defect(0))
            .unwrap();
        let zc = grid.node_center(i, j, z_first)[2];
        assert!((zc - (-0.01 + 0.0005)).abs() < 1e-12);
    }

    #[test]
    fn symmetric_inputs_give_symmetric_arrays() {
        let p = make_back_to_back(0.004, 0.016, 0.019).unwrap().with_lift_off(0.003);
        let mut sample = SampleSpec::homogeneous(0.06, 0.06, 0.01, c(2.7, -0.02));
        sample.defects.push(DefectSpec::hole([0.03, 0.03], 0.01, 0.004));
        let mut d = domain(1000.0, 0.02);
        d.window = Window::WholeSample;
        let (grid, bc) = build_grid(&sample, &p, [0.03, 0.03], &d).unwrap();
        // y-mirror keeps the drive/sense layout; x-mirror swaps it.
        let swapped = bc.swapped_roles();
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let a = grid.index(i, j, k);
                    let my = grid.index(i, grid.ny - 1 - j, k);
                    let mx = grid.index(grid.nx - 1 - i, j, k);
                    assert_eq!(grid.eps[a], grid.eps[my]);
                    assert_eq!(grid.eps[a], grid.eps[mx]);
                    assert_eq!(bc.roles[a], bc.roles[my]);
                    assert_eq!(bc.roles[a], swapped.roles[mx]);
                }
            }
        }
    }

    #[test]
    fn rasterization_is_deterministic() {
        let p = make_back_to_back(0.004, 0.016, 0.019).unwrap().with_lift_off(0.003).with_orientation(0.3);
        let mut sample = SampleSpec::homogeneous(0.1, 0.1, 0.01, c(2.7, -0.02));
        sample.defects.push(DefectSpec::blob([0.04, 0.05], [0.02, 0.01], 0.004, c(1.5, 0.0)));
        let d = domain(1000.0, 0.01);
        let a = build_grid(&sample, &p, [0.05, 0.05], &d).unwrap();
        let b = build_grid(&sample, &p, [0.05, 0.05], &d).unwrap();
        assert_eq!(a, b);
        // Only values from the declared set.
        let allowed = [c(1.0, 0.0), c(2.7, -0.02), c(1.5, 0.0)];
        assert!(a.0.eps.iter().all(|e| allowed.contains(e)));
    }

    #[test]
    fn overlapping_defects_last_wins() {
        let mut sample = SampleSpec::homogeneous(0.1, 0.1, 0.01, c(2.7, 0.0));
        sample.defects.push(DefectSpec::blob([0.05, 0.05], [0.02, 0.02], 0.004, c(1.5, 0.0)));
        sample.defects.push(DefectSpec::blob([0.05, 0.05], [0.01, 0.01], 0.002, c(4.0, 0.0)));
        let (m, e) = sample.material_at([0.05, 0.05, -0.005]);
        assert_eq!(m, Material::Defect(1));
        assert_eq!(e, c(4.0, 0.0));
    }

    #[test]
    fn under_resolved_feature_is_named() {
        let p = make_back_to_back(0.004, 0.016, 0.019).unwrap();
        let sample = SampleSpec::homogeneous(0.1, 0.1, 0.01, c(2.7, 0.0));
        let err = build_grid(&sample, &p, [0.05, 0.05], &domain(400.0, 0.01)).unwrap_err();
        match err {
            Error::Resolution { feature, .. } => assert_eq!(feature, "probe gap s"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn defect_outside_sample_is_bounds_error() {
        let p = make_back_to_back(0.004, 0.016, 0.019).unwrap();
        let mut sample = SampleSpec::homogeneous(0.1, 0.1, 0.01, c(2.7, 0.0));
        sample.defects.push(DefectSpec::hole([0.099, 0.05], 0.01, 0.004));
        let err = build_grid(&sample, &p, [0.05, 0.05], &domain(1000.0, 0.01)).unwrap_err();
        assert!(matches!(err, Error::Bounds(_)));
        let mut deep = SampleSpec::homogeneous(0.1, 0.1, 0.01, c(2.7, 0.0));
        deep.defects.push(DefectSpec::hole([0.05, 0.05], 0.01, 0.02));
        assert!(matches!(deep.validate(), Err(Error::Bounds(_))));
    }

    #[test]
    fn dirichlet_outer_grounds_boundary_layer() {
        let p = make_back_to_back(0.004, 0.016, 0.019).unwrap().with_lift_off(0.003);
        let sample = SampleSpec::homogeneous(0.1, 0.1, 0.01, c(2.7, 0.0));
        let mut d = domain(1000.0, 0.01);
        d.outer = OuterBoundary::DirichletZero;
        let (_, bc) = build_grid(&sample, &p, [0.05, 0.05], &d).unwrap();
        assert_eq!(bc.roles[bc.index(0, 0, 0)], NodeRole::Outer);
        assert_eq!(bc.roles[bc.index(bc.nx / 2, bc.ny / 2, 1)], NodeRole::Free);
        assert!(bc.count(NodeRole::Drive) > 0 && bc.count(NodeRole::Sense) > 0);
    }
}

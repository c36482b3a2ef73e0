//! Quasi-static potential solver and induced-charge evaluation.
//!
//! Solves `∇·(ε∇V) = 0` with the electrodes as Dirichlet node sets. Permittivity
//! is complex (`ε = ε′ − jε″`), so the potential and the sensed charge are
//! phasors; loss in the sample shows up as a phase shift of the charge.

mod cocg;
mod multigrid;
pub mod stencil;

use num_complex::Complex64;

pub use cocg::Preconditioner;
use cocg::{Precond, Outcome};
pub use stencil::Stencil;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryConditions, Material, NodeRole, PermittivityGrid};

/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.854_187_8128e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative residual `‖b − Ax‖ / ‖b‖` required on return.
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iter: 5000,
            preconditioner: Preconditioner::Multigrid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Complex potential per node, volts. Fixed nodes hold their exact values.
    pub values: Vec<Complex64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl PotentialField {
    pub fn at(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.values[(k * self.ny + j) * self.nx + i]
    }
}

/// Complex charge on the sensing electrode, coulombs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InducedCharge {
    pub q: Complex64,
}

impl InducedCharge {
    pub fn magnitude(&self) -> f64 {
        self.q.norm()
    }

    /// Phase in `(−π, π]`.
    pub fn phase(&self) -> f64 {
        let p = self.q.arg();
        if p <= -std::f64::consts::PI {
            std::f64::consts::PI
        } else {
            p
        }
    }
}

/// Operator, preconditioner and boundary values for one grid/BC pair.
pub struct FieldProblem {
    stencil: Stencil,
    precond: Option<(Preconditioner, Precond)>,
}

impl FieldProblem {
    pub fn new(grid: &PermittivityGrid, bc: &BoundaryConditions) -> Result<Self> {
        grid.validate()?;
        bc.validate_for(grid)?;
        Ok(FieldProblem {
            stencil: Stencil::new(grid, bc),
            precond: None,
        })
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    fn dirichlet_values(&self, v_drive: f64) -> Vec<Complex64> {
        self.stencil
            .roles
            .iter()
            .map(|r| match r {
                NodeRole::Drive => Complex64::new(v_drive, 0.0),
                _ => Complex64::new(0.0, 0.0),
            })
            .collect()
    }

    /// Solves for the potential with `v_drive` on the drive nodes and 0 V on
    /// every other fixed node. `guess`, if given, is a full potential field
    /// used as the starting point.
    pub fn solve(
        &mut self,
        v_drive: f64,
        cfg: &SolverConfig,
        guess: Option<&[Complex64]>,
    ) -> Result<PotentialField> {
        if !(cfg.tol > 0.0) {
            return Err(Error::InvalidArgument("solver tol must be > 0".into()));
        }
        let n = self.stencil.len();
        let zero = Complex64::new(0.0, 0.0);
        let dir = self.dirichlet_values(v_drive);
        // b = −L·V_dirichlet on the free nodes.
        let mut b = vec![zero; n];
        self.stencil.apply_full(&dir, &mut b);
        for (bi, r) in b.iter_mut().zip(&self.stencil.roles) {
            *bi = if r.is_fixed() { zero } else { -*bi };
        }
        let mut x = vec![zero; n];
        if let Some(g) = guess {
            if g.len() != n {
                return Err(Error::InvalidArgument("initial guess has the wrong length".into()));
            }
            for (idx, r) in self.stencil.roles.iter().enumerate() {
                if !r.is_fixed() {
                    x[idx] = g[idx];
                }
            }
        }
        let rebuild = !matches!(&self.precond, Some((kind, _)) if *kind == cfg.preconditioner);
        if rebuild {
            self.precond = Some((cfg.preconditioner, Precond::new(&self.stencil, cfg.preconditioner)));
        }
        let precond = &mut self.precond.as_mut().expect("built above").1;
        let Outcome {
            iterations,
            residual,
            converged,
        } = cocg::solve(&self.stencil, precond, &b, &mut x, cfg.tol, cfg.max_iter);
        if !converged {
            return Err(Error::Convergence {
                iterations,
                residual,
            });
        }
        for (xi, di) in x.iter_mut().zip(&dir) {
            *xi += di;
        }
        Ok(PotentialField {
            nx: self.stencil.nx,
            ny: self.stencil.ny,
            nz: self.stencil.nz,
            values: x,
            residual_norm: residual,
            iterations,
        })
    }

    /// Charge on the node set with `role`: ε₀ times the outward flux of `ε∇V`
    /// through the discrete Gauss surface enclosing it.
    pub fn conductor_charge(&self, field: &PotentialField, role: NodeRole) -> Complex64 {
        EPS0 * self.stencil.outward_flux(&field.values, role)
    }

    pub fn induced_charge(&self, field: &PotentialField) -> InducedCharge {
        InducedCharge {
            q: self.conductor_charge(field, NodeRole::Sense),
        }
    }
}

pub fn solve_potential(
    grid: &PermittivityGrid,
    bc: &BoundaryConditions,
    v_drive: f64,
    cfg: &SolverConfig,
) -> Result<PotentialField> {
    FieldProblem::new(grid, bc)?.solve(v_drive, cfg, None)
}

/// Charge on the sensing electrode for a solved field.
pub fn induced_charge(
    field: &PotentialField,
    grid: &PermittivityGrid,
    bc: &BoundaryConditions,
) -> Result<InducedCharge> {
    if field.values.len() != grid.len() {
        return Err(Error::InvalidArgument("field does not belong to this grid".into()));
    }
    let problem = FieldProblem::new(grid, bc)?;
    Ok(problem.induced_charge(field))
}

/// Which voxels to perturb when building a sensitivity map.
#[derive(Debug, Clone, PartialEq)]
pub enum SensitivitySet {
    /// Every sample or defect voxel.
    Sample,
    /// Explicit voxel indices (any material, fixed nodes are skipped).
    Voxels(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMap {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// `(|q_perturbed| − |q_base|) / delta_eps` per voxel, C per unit ε′.
    pub values: Vec<f64>,
    /// Voxels that were actually perturbed; the rest hold 0.
    pub perturbed: Vec<bool>,
    pub delta_eps: f64,
    pub base_charge: InducedCharge,
}

impl SensitivityMap {
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(k * self.ny + j) * self.nx + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Brute-force sensitivity: perturb `ε′` of one voxel at a time, re-solve and
/// difference the sensed charge magnitude.
pub fn sensitivity_map(
    grid: &PermittivityGrid,
    bc: &BoundaryConditions,
    v_drive: f64,
    delta_eps: f64,
    set: &SensitivitySet,
    cfg: &SolverConfig,
) -> Result<SensitivityMap> {
    if !(delta_eps > 0.0) || !delta_eps.is_finite() {
        return Err(Error::InvalidArgument("delta_eps must be > 0".into()));
    }
    let mut base = FieldProblem::new(grid, bc)?;
    let base_field = base.solve(v_drive, cfg, None)?;
    let base_q = base.induced_charge(&base_field);
    let q0 = base_q.magnitude();

    let voxels: Vec<usize> = match set {
        SensitivitySet::Sample => (0..grid.len())
            .filter(|&i| grid.material[i] != Material::Air)
            .collect(),
        SensitivitySet::Voxels(v) => {
            if let Some(&bad) = v.iter().find(|&&i| i >= grid.len()) {
                return Err(Error::Bounds(format!("voxel index {bad} outside grid")));
            }
            v.clone()
        }
    };

    let mut values = vec![0.0; grid.len()];
    let mut perturbed = vec![false; grid.len()];
    let mut work = grid.clone();
    let mut problem = FieldProblem::new(grid, bc)?;
    for &v in &voxels {
        if bc.roles[v].is_fixed() {
            continue;
        }
        let original = work.eps[v];
        work.eps[v] = original + Complex64::new(delta_eps, 0.0);
        problem.stencil.update_voxel(&work, v);
        // The multigrid hierarchy of the base operator stays a good
        // preconditioner for a single-voxel change.
        problem.precond = base.precond.take();
        let field = problem.solve(v_drive, cfg, Some(&base_field.values));
        base.precond = problem.precond.take();
        let field = field?;
        let q = problem.induced_charge(&field).magnitude();
        values[v] = (q - q0) / delta_eps;
        perturbed[v] = true;
        work.eps[v] = original;
        problem.stencil.restore_voxel(&base.stencil, v);
    }
    Ok(SensitivityMap {
        nx: grid.nx,
        ny: grid.ny,
        nz: grid.nz,
        values,
        perturbed,
        delta_eps,
        base_charge: base_q,
    })
}

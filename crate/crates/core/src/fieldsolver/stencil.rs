//! Finite-volume 7-point operator for `∇·(ε∇V) = 0` on the voxel lattice.

use num_complex::Complex64;

use crate::geometry::{BoundaryConditions, NodeRole, PermittivityGrid};

/// Harmonic mean of two voxel permittivities, the face value of the flux.
#[inline]
pub fn harmonic(a: Complex64, b: Complex64) -> Complex64 {
    2.0 * a * b / (a + b)
}

/// Face conductances (in units of ε₀) and the node classification.
///
/// `gx[idx]` couples node `idx` to `idx + 1`; `gy` to `idx + nx`; `gz` to
/// `idx + nx·ny`. Couplings across the domain boundary are zero, which is the
/// homogeneous Neumann condition.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub h: f64,
    pub gx: Vec<Complex64>,
    pub gy: Vec<Complex64>,
    pub gz: Vec<Complex64>,
    /// Sum of all face conductances touching each node.
    pub diag: Vec<Complex64>,
    pub roles: Vec<NodeRole>,
    pub fixed: Vec<usize>,
}

impl Stencil {
    pub fn new(grid: &PermittivityGrid, bc: &BoundaryConditions) -> Self {
        let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
        let n = grid.len();
        let zero = Complex64::new(0.0, 0.0);
        let mut gx = vec![zero; n];
        let mut gy = vec![zero; n];
        let mut gz = vec![zero; n];
        let h = grid.h;
        let sxy = nx * ny;
        for idx in 0..n {
            let i = idx % nx;
            let j = (idx / nx) % ny;
            let k = idx / sxy;
            let e = grid.eps[idx];
            if i + 1 < nx {
                gx[idx] = h * harmonic(e, grid.eps[idx + 1]);
            }
            if j + 1 < ny {
                gy[idx] = h * harmonic(e, grid.eps[idx + nx]);
            }
            if k + 1 < nz {
                gz[idx] = h * harmonic(e, grid.eps[idx + sxy]);
            }
        }
        let fixed = bc
            .roles
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_fixed())
            .map(|(i, _)| i)
            .collect();
        let mut s = Stencil {
            nx,
            ny,
            nz,
            h,
            gx,
            gy,
            gz,
            diag: vec![zero; n],
            roles: bc.roles.clone(),
            fixed,
        };
        s.rebuild_diag();
        s
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rebuild_diag(&mut self) {
        let n = self.len();
        let (sx, sy) = (self.nx, self.nx * self.ny);
        let zero = Complex64::new(0.0, 0.0);
        self.diag.iter_mut().for_each(|d| *d = zero);
        for idx in 0..n {
            let g = self.gx[idx];
            if idx + 1 < n {
                self.diag[idx] += g;
                self.diag[idx + 1] += g;
            }
            if idx + sx < n {
                let g = self.gy[idx];
                self.diag[idx] += g;
                self.diag[idx + sx] += g;
            }
            if idx + sy < n {
                let g = self.gz[idx];
                self.diag[idx] += g;
                self.diag[idx + sy] += g;
            }
        }
    }

    /// Recomputes the six faces around voxel `idx` after its permittivity changed.
    pub fn update_voxel(&mut self, grid: &PermittivityGrid, idx: usize) {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let sxy = nx * ny;
        let i = idx % nx;
        let j = (idx / nx) % ny;
        let k = idx / sxy;
        let h = self.h;
        let e = grid.eps[idx];
        let touch = |g: &mut Complex64, a: usize, b: usize, diag: &mut [Complex64], new: Complex64| {
            let delta = new - *g;
            *g = new;
            diag[a] += delta;
            diag[b] += delta;
        };
        if i + 1 < nx {
            let new = h * harmonic(e, grid.eps[idx + 1]);
            touch(&mut self.gx[idx], idx, idx + 1, &mut self.diag, new);
        }
        if i > 0 {
            let new = h * harmonic(grid.eps[idx - 1], e);
            touch(&mut self.gx[idx - 1], idx - 1, idx, &mut self.diag, new);
        }
        if j + 1 < ny {
            let new = h * harmonic(e, grid.eps[idx + nx]);
            touch(&mut self.gy[idx], idx, idx + nx, &mut self.diag, new);
        }
        if j > 0 {
            let new = h * harmonic(grid.eps[idx - nx], e);
            touch(&mut self.gy[idx - nx], idx - nx, idx, &mut self.diag, new);
        }
        if k + 1 < nz {
            let new = h * harmonic(e, grid.eps[idx + sxy]);
            touch(&mut self.gz[idx], idx, idx + sxy, &mut self.diag, new);
        }
        if k > 0 {
            let new = h * harmonic(grid.eps[idx - sxy], e);
            touch(&mut self.gz[idx - sxy], idx - sxy, idx, &mut self.diag, new);
        }
    }

    /// Copies the faces and diagonal entries around voxel `idx` back from `base`.
    pub fn restore_voxel(&mut self, base: &Stencil, idx: usize) {
        let (sx, sy) = (self.nx, self.nx * self.ny);
        let n = self.len();
        for nb in [Some(idx), idx.checked_sub(1), idx.checked_sub(sx), idx.checked_sub(sy)]
            .into_iter()
            .flatten()
        {
            self.gx[nb] = base.gx[nb];
            self.gy[nb] = base.gy[nb];
            self.gz[nb] = base.gz[nb];
        }
        for nb in [
            Some(idx),
            idx.checked_sub(1),
            idx.checked_sub(sx),
            idx.checked_sub(sy),
            Some(idx + 1),
            Some(idx + sx),
            Some(idx + sy),
        ]
        .into_iter()
        .flatten()
        .filter(|&i| i < n)
        {
            self.diag[nb] = base.diag[nb];
        }
    }

    /// `y = L·x` for the full Laplacian-type operator (no boundary handling).
    pub fn apply_full(&self, x: &[Complex64], y: &mut [Complex64]) {
        let n = self.len();
        let (sx, sy) = (self.nx, self.nx * self.ny);
        for idx in 0..n {
            y[idx] = self.diag[idx] * x[idx];
        }
        for idx in 0..n - 1 {
            let g = self.gx[idx];
            y[idx] -= g * x[idx + 1];
            y[idx + 1] -= g * x[idx];
        }
        if n > sx {
            for idx in 0..n - sx {
                let g = self.gy[idx];
                y[idx] -= g * x[idx + sx];
                y[idx + sx] -= g * x[idx];
            }
        }
        if n > sy {
            for idx in 0..n - sy {
                let g = self.gz[idx];
                y[idx] -= g * x[idx + sy];
                y[idx + sy] -= g * x[idx];
            }
        }
    }

    /// Operator restricted to free nodes. `x` must vanish on fixed nodes; the
    /// result is zeroed there.
    pub fn apply_free(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.apply_full(x, y);
        for &f in &self.fixed {
            y[f] = Complex64::new(0.0, 0.0);
        }
    }

    /// Net flux (in units of ε₀) leaving the node set with the given role.
    /// Faces internal to the set cancel.
    pub fn outward_flux(&self, v: &[Complex64], role: NodeRole) -> Complex64 {
        let n = self.len();
        let (sx, sy) = (self.nx, self.nx * self.ny);
        let mut q = Complex64::new(0.0, 0.0);
        let mut face = |a: usize, b: usize, g: Complex64| {
            let ra = self.roles[a] == role;
            let rb = self.roles[b] == role;
            if ra != rb {
                let dv = v[a] - v[b];
                if ra {
                    q += g * dv;
                } else {
                    q -= g * dv;
                }
            }
        };
        for idx in 0..n - 1 {
            if self.gx[idx] != Complex64::new(0.0, 0.0) {
                face(idx, idx + 1, self.gx[idx]);
            }
        }
        if n > sx {
            for idx in 0..n - sx {
                face(idx, idx + sx, self.gy[idx]);
            }
        }
        if n > sy {
            for idx in 0..n - sy {
                face(idx, idx + sy, self.gz[idx]);
            }
        }
        q
    }
}

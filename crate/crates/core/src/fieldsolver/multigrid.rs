//! Aggregation multigrid preconditioner on the structured lattice.
//!
//! Each coarse node aggregates a 2×2×2 block of free fine nodes with
//! piecewise-constant interpolation, so the Galerkin product `PᵀAP` is again
//! a 7-point operator: coarse face conductances are sums of the fine faces
//! crossing between blocks. Smoothing is forward Gauss–Seidel before and
//! backward Gauss–Seidel after the coarse correction, which keeps the
//! preconditioner symmetric (`Mᵀ = M`) as COCG requires.

use num_complex::Complex64;

use super::stencil::Stencil;

const COARSEST_NODES: usize = 200;
const MAX_LEVELS: usize = 12;
/// Unsmoothed aggregation under-corrects; scaling the coarse correction helps.
const COARSE_SCALE: f64 = 1.8;

struct Level {
    nx: usize,
    ny: usize,
    nz: usize,
    gx: Vec<Complex64>,
    gy: Vec<Complex64>,
    gz: Vec<Complex64>,
    inv_diag: Vec<Complex64>,
    diag: Vec<Complex64>,
    free: Vec<bool>,
    x: Vec<Complex64>,
    b: Vec<Complex64>,
    r: Vec<Complex64>,
}

impl Level {
    fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    fn from_stencil(s: &Stencil) -> Self {
        let n = s.len();
        let free: Vec<bool> = s.roles.iter().map(|r| !r.is_fixed()).collect();
        let (sx, sy) = (s.nx, s.nx * s.ny);
        let zero = Complex64::new(0.0, 0.0);
        let mut gx = s.gx.clone();
        let mut gy = s.gy.clone();
        let mut gz = s.gz.clone();
        for idx in 0..n {
            if idx + 1 < n && !(free[idx] && free[idx + 1]) {
                gx[idx] = zero;
            }
            if idx + sx < n && !(free[idx] && free[idx + sx]) {
                gy[idx] = zero;
            }
            if idx + sy < n && !(free[idx] && free[idx + sy]) {
                gz[idx] = zero;
            }
        }
        let diag = s.diag.clone();
        Self::assemble(s.nx, s.ny, s.nz, gx, gy, gz, diag, free)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        nx: usize,
        ny: usize,
        nz: usize,
        gx: Vec<Complex64>,
        gy: Vec<Complex64>,
        gz: Vec<Complex64>,
        diag: Vec<Complex64>,
        free: Vec<bool>,
    ) -> Self {
        let n = nx * ny * nz;
        let zero = Complex64::new(0.0, 0.0);
        let inv_diag = diag
            .iter()
            .zip(&free)
            .map(|(d, &f)| if f && d.norm() > 0.0 { d.inv() } else { zero })
            .collect();
        Level {
            nx,
            ny,
            nz,
            gx,
            gy,
            gz,
            inv_diag,
            diag,
            free,
            x: vec![zero; n],
            b: vec![zero; n],
            r: vec![zero; n],
        }
    }

    fn coarsen(&self) -> Level {
        let (cx, cy, cz) = (self.nx.div_ceil(2), self.ny.div_ceil(2), self.nz.div_ceil(2));
        let nc = cx * cy * cz;
        let zero = Complex64::new(0.0, 0.0);
        let mut gx = vec![zero; nc];
        let mut gy = vec![zero; nc];
        let mut gz = vec![zero; nc];
        let mut diag = vec![zero; nc];
        let mut free = vec![false; nc];
        let cidx = |i: usize, j: usize, k: usize| ((k / 2) * cy + j / 2) * cx + i / 2;
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    let idx = (k * self.ny + j) * self.nx + i;
                    if !self.free[idx] {
                        continue;
                    }
                    let c = cidx(i, j, k);
                    free[c] = true;
                    diag[c] += self.diag[idx];
                    if i + 1 < self.nx {
                        let g = self.gx[idx];
                        if (i + 1) / 2 == i / 2 {
                            diag[c] -= 2.0 * g;
                        } else {
                            gx[c] += g;
                        }
                    }
                    if j + 1 < self.ny {
                        let g = self.gy[idx];
                        if (j + 1) / 2 == j / 2 {
                            diag[c] -= 2.0 * g;
                        } else {
                            gy[c] += g;
                        }
                    }
                    if k + 1 < self.nz {
                        let g = self.gz[idx];
                        if (k + 1) / 2 == k / 2 {
                            diag[c] -= 2.0 * g;
                        } else {
                            gz[c] += g;
                        }
                    }
                }
            }
        }
        Level::assemble(cx, cy, cz, gx, gy, gz, diag, free)
    }

    /// Off-diagonal part `Σ g·x_nb` for node `(i, j, k)`.
    #[inline(always)]
    fn neighbor_sum(&self, x: &[Complex64], idx: usize, i: usize, j: usize, k: usize) -> Complex64 {
        let (sx, sy) = (self.nx, self.nx * self.ny);
        let mut s = Complex64::new(0.0, 0.0);
        if i > 0 {
            s += self.gx[idx - 1] * x[idx - 1];
        }
        if i + 1 < self.nx {
            s += self.gx[idx] * x[idx + 1];
        }
        if j > 0 {
            s += self.gy[idx - sx] * x[idx - sx];
        }
        if j + 1 < self.ny {
            s += self.gy[idx] * x[idx + sx];
        }
        if k > 0 {
            s += self.gz[idx - sy] * x[idx - sy];
        }
        if k + 1 < self.nz {
            s += self.gz[idx] * x[idx + sy];
        }
        s
    }

    fn gs_forward(&mut self) {
        let mut x = std::mem::take(&mut self.x);
        for k in 0..self.nz {
            for j in 0..self.ny {
                let row = (k * self.ny + j) * self.nx;
                for i in 0..self.nx {
                    let idx = row + i;
                    if self.free[idx] {
                        x[idx] = (self.b[idx] + self.neighbor_sum(&x, idx, i, j, k)) * self.inv_diag[idx];
                    }
                }
            }
        }
        self.x = x;
    }

    fn gs_backward(&mut self) {
        let mut x = std::mem::take(&mut self.x);
        for k in (0..self.nz).rev() {
            for j in (0..self.ny).rev() {
                let row = (k * self.ny + j) * self.nx;
                for i in (0..self.nx).rev() {
                    let idx = row + i;
                    if self.free[idx] {
                        x[idx] = (self.b[idx] + self.neighbor_sum(&x, idx, i, j, k)) * self.inv_diag[idx];
                    }
                }
            }
        }
        self.x = x;
    }

    fn residual(&mut self) {
        for k in 0..self.nz {
            for j in 0..self.ny {
                let row = (k * self.ny + j) * self.nx;
                for i in 0..self.nx {
                    let idx = row + i;
                    self.r[idx] = if self.free[idx] {
                        self.b[idx] - self.diag[idx] * self.x[idx]
                            + self.neighbor_sum(&self.x, idx, i, j, k)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                }
            }
        }
    }
}

/// Dense `LDLᵀ` factorization of the coarsest operator (complex symmetric, no pivoting).
struct DenseLdl {
    map: Vec<Option<usize>>,
    m: usize,
    l: Vec<Complex64>,
    d: Vec<Complex64>,
}

impl DenseLdl {
    fn new(level: &Level) -> Self {
        let n = level.len();
        let mut map = vec![None; n];
        let mut m = 0;
        for idx in 0..n {
            if level.free[idx] {
                map[idx] = Some(m);
                m += 1;
            }
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut a = vec![zero; m * m];
        let (sx, sy) = (level.nx, level.nx * level.ny);
        for idx in 0..n {
            let Some(p) = map[idx] else { continue };
            a[p * m + p] = level.diag[idx];
            for (nb, g) in [(idx + 1, level.gx[idx]), (idx + sx, level.gy[idx]), (idx + sy, level.gz[idx])] {
                if nb < n && g != zero {
                    if let Some(q) = map[nb] {
                        a[p * m + q] -= g;
                        a[q * m + p] -= g;
                    }
                }
            }
        }
        let mut d = vec![zero; m];
        for j in 0..m {
            let mut dj = a[j * m + j];
            for k in 0..j {
                dj -= a[j * m + k] * a[j * m + k] * d[k];
            }
            d[j] = dj;
            for i in j + 1..m {
                let mut v = a[i * m + j];
                for k in 0..j {
                    v -= a[i * m + k] * a[j * m + k] * d[k];
                }
                a[i * m + j] = if dj.norm() > 0.0 { v / dj } else { zero };
            }
        }
        DenseLdl { map, m, l: a, d }
    }

    fn solve(&self, b: &[Complex64], x: &mut [Complex64]) {
        let m = self.m;
        let zero = Complex64::new(0.0, 0.0);
        let mut y = vec![zero; m];
        for (idx, slot) in self.map.iter().enumerate() {
            if let Some(p) = slot {
                y[*p] = b[idx];
            }
        }
        for i in 0..m {
            let mut v = y[i];
            for k in 0..i {
                v -= self.l[i * m + k] * y[k];
            }
            y[i] = v;
        }
        for i in 0..m {
            y[i] = if self.d[i].norm() > 0.0 { y[i] / self.d[i] } else { zero };
        }
        for i in (0..m).rev() {
            let mut v = y[i];
            for k in i + 1..m {
                v -= self.l[k * m + i] * y[k];
            }
            y[i] = v;
        }
        for (idx, slot) in self.map.iter().enumerate() {
            x[idx] = match slot {
                Some(p) => y[*p],
                None => zero,
            };
        }
    }
}

pub(crate) struct Hierarchy {
    levels: Vec<Level>,
    coarse: DenseLdl,
}

impl Hierarchy {
    pub fn new(stencil: &Stencil) -> Self {
        let mut levels = vec![Level::from_stencil(stencil)];
        while levels.len() < MAX_LEVELS {
            let last = levels.last().expect("non-empty");
            let free = last.free.iter().filter(|&&f| f).count();
            if free <= COARSEST_NODES || (last.nx <= 2 && last.ny <= 2 && last.nz <= 2) {
                break;
            }
            let next = last.coarsen();
            levels.push(next);
        }
        let coarse = DenseLdl::new(levels.last().expect("non-empty"));
        Hierarchy { levels, coarse }
    }

    pub fn vcycle(&mut self, r: &[Complex64], z: &mut [Complex64]) {
        self.levels[0].b.copy_from_slice(r);
        self.cycle(0);
        z.copy_from_slice(&self.levels[0].x);
    }

    fn cycle(&mut self, l: usize) {
        let zero = Complex64::new(0.0, 0.0);
        if l + 1 == self.levels.len() {
            let lvl = &mut self.levels[l];
            let mut x = std::mem::take(&mut lvl.x);
            self.coarse.solve(&lvl.b, &mut x);
            lvl.x = x;
            return;
        }
        {
            let lvl = &mut self.levels[l];
            lvl.x.iter_mut().for_each(|v| *v = zero);
            lvl.gs_forward();
            lvl.residual();
        }
        let (fine, rest) = self.levels.split_at_mut(l + 1);
        let f = &fine[l];
        let c = &mut rest[0];
        c.b.iter_mut().for_each(|v| *v = zero);
        for k in 0..f.nz {
            for j in 0..f.ny {
                for i in 0..f.nx {
                    let idx = (k * f.ny + j) * f.nx + i;
                    if f.free[idx] {
                        let ci = ((k / 2) * c.ny + j / 2) * c.nx + i / 2;
                        c.b[ci] += f.r[idx];
                    }
                }
            }
        }
        self.cycle(l + 1);
        let (fine, rest) = self.levels.split_at_mut(l + 1);
        let f = &mut fine[l];
        let c = &rest[0];
        for k in 0..f.nz {
            for j in 0..f.ny {
                for i in 0..f.nx {
                    let idx = (k * f.ny + j) * f.nx + i;
                    if f.free[idx] {
                        let ci = ((k / 2) * c.ny + j / 2) * c.nx + i / 2;
                        f.x[idx] += COARSE_SCALE * c.x[ci];
                    }
                }
            }
        }
        f.gs_backward();
    }
}

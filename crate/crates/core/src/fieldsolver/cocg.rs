//! Preconditioned conjugate orthogonal conjugate gradient (COCG).
//!
//! Lossy permittivity makes the operator complex symmetric (`Aᵀ = A`) but not
//! Hermitian. COCG is CG with the unconjugated bilinear form `xᵀy`; for real
//! operators it reduces to ordinary CG.

use num_complex::Complex64;

use super::multigrid::Hierarchy;
use super::stencil::Stencil;

#[inline]
pub(crate) fn dotu(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    /// Diagonal scaling.
    Jacobi,
    /// One symmetric V-cycle of aggregation multigrid.
    #[default]
    Multigrid,
}

pub(crate) enum Precond {
    Jacobi(Vec<Complex64>),
    Multigrid(Box<Hierarchy>),
}

impl Precond {
    pub fn new(stencil: &Stencil, kind: Preconditioner) -> Self {
        match kind {
            Preconditioner::Jacobi => {
                let mut inv: Vec<Complex64> = stencil.diag.iter().map(|d| d.inv()).collect();
                for &f in &stencil.fixed {
                    inv[f] = Complex64::new(0.0, 0.0);
                }
                Precond::Jacobi(inv)
            }
            Preconditioner::Multigrid => Precond::Multigrid(Box::new(Hierarchy::new(stencil))),
        }
    }

    fn apply(&mut self, r: &[Complex64], z: &mut [Complex64]) {
        match self {
            Precond::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv.iter()) {
                    *zi = ri * di;
                }
            }
            Precond::Multigrid(h) => h.vcycle(r, z),
        }
    }
}

const MAX_RESTARTS: usize = 8;

pub(crate) struct Outcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` on the free nodes. `x` holds the initial guess and must
/// vanish on fixed nodes, as must `b`.
pub(crate) fn solve(
    stencil: &Stencil,
    precond: &mut Precond,
    b: &[Complex64],
    x: &mut [Complex64],
    tol: f64,
    max_iter: usize,
) -> Outcome {
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = zero);
        return Outcome {
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![zero; n];
    let mut z = vec![zero; n];
    let mut p = vec![zero; n];
    let mut q = vec![zero; n];
    let mut iterations = 0;
    let mut restarts = 0;

    // Restart from the true residual whenever the recursive one claims
    // convergence but the true one disagrees.
    loop {
        stencil.apply_free(x, &mut q);
        for i in 0..n {
            r[i] = b[i] - q[i];
        }
        let mut res = norm(&r) / bnorm;
        if res <= tol {
            return Outcome {
                iterations,
                residual: res,
                converged: true,
            };
        }
        if iterations >= max_iter || restarts > MAX_RESTARTS {
            return Outcome {
                iterations,
                residual: res,
                converged: false,
            };
        }
        restarts += 1;
        precond.apply(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rho = dotu(&r, &z);
        while iterations < max_iter {
            stencil.apply_free(&p, &mut q);
            let pq = dotu(&p, &q);
            if pq.norm() == 0.0 || rho.norm() == 0.0 {
                break;
            }
            let alpha = rho / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            iterations += 1;
            res = norm(&r) / bnorm;
            if res <= tol {
                break;
            }
            precond.apply(&r, &mut z);
            let rho_new = dotu(&r, &z);
            let beta = rho_new / rho;
            rho = rho_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if res > tol && iterations >= max_iter {
            stencil.apply_free(x, &mut q);
            let true_res = (0..n).map(|i| (b[i] - q[i]).norm_sqr()).sum::<f64>().sqrt() / bnorm;
            return Outcome {
                iterations,
                residual: true_res,
                converged: false,
            };
        }
    }
}

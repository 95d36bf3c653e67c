//! Gaussian-kernel interpolation of a sparse gradient.
//!
//! Given distinct centers `x_i` and vectors `a_i`, the minimal-norm vector
//! field of the RKHS with kernel `exp(-‖x - y‖² / 2σ²) · Id` that takes the
//! value `a_i` at every `x_i` is `v(x) = Σ_i ρ(‖x - x_i‖) α_i` with
//! `K α = a`. The kernel is scalar times identity, so one `m × m` Cholesky
//! factorization serves all `d` coordinates.

use crate::error::{Error, Result};
use crate::gradient::{Constraints, SparseGradient};
use crate::rips::PointCloud;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Diagonal regularization tried when the Gram matrix fails to factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterPolicy {
    pub initial: f64,
    pub max: f64,
    pub factor: f64,
    /// Iterative refinement sweeps applied after a jittered solve.
    pub refine_steps: usize,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial: 1e-12,
            max: 1e-6,
            factor: 10.0,
            refine_steps: 8,
        }
    }
}

/// `ρ_σ(u)` evaluated from the squared distance `u²`.
#[inline]
pub fn gaussian(dist_squared: f64, sigma: f64) -> f64 {
    (-dist_squared / (2.0 * sigma * sigma)).exp()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interpolant {
    dim: usize,
    sigma: f64,
    centers: Vec<f64>,
    coefficients: Vec<f64>,
    jitter_used: f64,
    kappa: f64,
}

/// Relative residual a jittered solve must reach after refinement.
const MAX_REFINED_RESIDUAL: f64 = 1e-6;

/// Fits the interpolant through `vectors` at `centers` (both row-major `m × d`).
pub fn fit(centers: &[f64], vectors: &[f64], dim: usize, sigma: f64, policy: &JitterPolicy) -> Result<Interpolant> {
    if dim == 0 || centers.is_empty() || !centers.len().is_multiple_of(dim) || vectors.len() != centers.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("matching non-empty m × {dim} centers and vectors"),
            got: format!("{} centers, {} vector entries", centers.len(), vectors.len()),
        });
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {sigma}")));
    }
    let m = centers.len() / dim;
    let gram = DMatrix::from_fn(m, m, |i, j| {
        gaussian(
            sq_dist(&centers[i * dim..(i + 1) * dim], &centers[j * dim..(j + 1) * dim]),
            sigma,
        )
    });
    let rhs = DMatrix::from_row_slice(m, dim, vectors);

    let scale = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    let alpha = loop {
        let shifted = if jitter > 0.0 {
            &gram + DMatrix::identity(m, m) * jitter
        } else {
            gram.clone()
        };
        if let Some(chol) = shifted.cholesky() {
            let mut alpha = chol.solve(&rhs);
            if jitter == 0.0 {
                break alpha;
            }
            // recover the unregularized solution as far as the shifted factor allows
            for _ in 0..policy.refine_steps {
                let residual = &rhs - &gram * &alpha;
                alpha += chol.solve(&residual);
            }
            let residual = (&rhs - &gram * &alpha).amax();
            if residual <= MAX_REFINED_RESIDUAL * scale {
                break alpha;
            }
        }
        let next = if jitter == 0.0 {
            policy.initial
        } else {
            jitter * policy.factor
        };
        if next > policy.max * (1.0 + 1e-9) {
            return Err(Error::Singular { jitter });
        }
        jitter = next;
    };
    let kappa = condition_number(&gram, jitter);

    let mut coefficients = Vec::with_capacity(m * dim);
    for i in 0..m {
        for k in 0..dim {
            coefficients.push(alpha[(i, k)]);
        }
    }
    Ok(Interpolant {
        dim,
        sigma,
        centers: centers.to_vec(),
        coefficients,
        jitter_used: jitter,
        kappa,
    })
}

/// Fits on consolidated gradient constraints.
pub fn fit_constraints(c: &Constraints, sigma: f64, policy: &JitterPolicy) -> Result<Interpolant> {
    fit(&c.centers, &c.vectors, c.dim, sigma, policy)
}

/// `λ_max / λ_min` of `K + jitter·I`.
fn condition_number(gram: &DMatrix<f64>, jitter: f64) -> f64 {
    let m = gram.nrows();
    let shifted = gram + DMatrix::identity(m, m) * jitter;
    let eig = SymmetricEigen::new(shifted).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn check_parts(dim: usize, sigma: f64, centers: &[f64], coefficients: &[f64]) -> Result<()> {
    if dim == 0 || centers.is_empty() || !centers.len().is_multiple_of(dim) || coefficients.len() != centers.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("matching non-empty m × {dim} centers and coefficients"),
            got: format!("{} centers, {} coefficients", centers.len(), coefficients.len()),
        });
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {sigma}")));
    }
    Ok(())
}

impl Interpolant {
    /// Rebuilds an interpolant from stored centers and coefficients (no solve).
    pub fn from_parts(dim: usize, sigma: f64, centers: Vec<f64>, coefficients: Vec<f64>) -> Result<Self> {
        check_parts(dim, sigma, &centers, &coefficients)?;
        let m = centers.len() / dim;
        let gram = DMatrix::from_fn(m, m, |i, j| {
            gaussian(
                sq_dist(&centers[i * dim..(i + 1) * dim], &centers[j * dim..(j + 1) * dim]),
                sigma,
            )
        });
        let kappa = condition_number(&gram, 0.0);
        Ok(Self {
            dim,
            sigma,
            centers,
            coefficients,
            jitter_used: 0.0,
            kappa,
        })
    }

    /// Restores a serialized interpolant, keeping its recorded jitter and condition number.
    pub fn from_stored(
        dim: usize,
        sigma: f64,
        centers: Vec<f64>,
        coefficients: Vec<f64>,
        jitter_used: f64,
        kappa: f64,
    ) -> Result<Self> {
        check_parts(dim, sigma, &centers, &coefficients)?;
        if !(jitter_used >= 0.0) || !jitter_used.is_finite() {
            return Err(Error::invalid(format!("jitter must be finite and >= 0, got {jitter_used}")));
        }
        if centers.iter().chain(&coefficients).any(|v| !v.is_finite()) {
            return Err(Error::invalid("interpolant has non-finite centers or coefficients"));
        }
        Ok(Self {
            dim,
            sigma,
            centers,
            coefficients,
            jitter_used,
            kappa,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coefficient(&self, i: usize) -> &[f64] {
        &self.coefficients[i * self.dim..(i + 1) * self.dim]
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Spectral condition number of the (jittered) Gram matrix.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Writes `v(p)` into `out`.
    #[inline]
    pub fn eval_into(&self, p: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.len() {
            let w = gaussian(sq_dist(p, self.center(i)), self.sigma);
            for (o, a) in out.iter_mut().zip(self.coefficient(i)) {
                *o += w * a;
            }
        }
    }

    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(p, &mut out);
        out
    }

    /// Evaluates the field at every row of a row-major `k × d` array.
    pub fn evaluate(&self, points: &[f64]) -> Result<Vec<f64>> {
        if !points.len().is_multiple_of(self.dim) {
            return Err(Error::ShapeMismatch {
                expected: format!("rows of {} coordinates", self.dim),
                got: format!("{} values", points.len()),
            });
        }
        let mut out = vec![0.0; points.len()];
        out.par_chunks_mut(self.dim)
            .zip(points.par_chunks(self.dim))
            .for_each(|(o, p)| self.eval_into(p, o));
        Ok(out)
    }

    pub fn evaluate_cloud(&self, x: &PointCloud) -> Result<Vec<f64>> {
        if x.dim() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: format!("points in R^{}", self.dim),
                got: format!("R^{}", x.dim()),
            });
        }
        self.evaluate(x.coords())
    }

    /// Row-major `d × d` Jacobian `∂v_a / ∂x_b` at `p`.
    pub fn jacobian(&self, p: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut jac = vec![0.0; d * d];
        let s2 = self.sigma * self.sigma;
        for i in 0..self.len() {
            let c = self.center(i);
            let w = gaussian(sq_dist(p, c), self.sigma);
            let alpha = self.coefficient(i);
            for a in 0..d {
                for b in 0..d {
                    jac[a * d + b] -= alpha[a] * w * (p[b] - c[b]) / s2;
                }
            }
        }
        jac
    }

    /// Global Lipschitz bound `Σ ‖α_i‖ · max|ρ'| = Σ ‖α_i‖ / (σ √e)`.
    pub fn lipschitz_upper(&self) -> f64 {
        let total: f64 = (0..self.len())
            .map(|i| self.coefficient(i).iter().map(|a| a * a).sum::<f64>().sqrt())
            .sum();
        total / (self.sigma * std::f64::consts::E.sqrt())
    }

    /// Largest Jacobian spectral norm over the probe rows and the centers.
    pub fn empirical_lipschitz(&self, probes: &[f64]) -> f64 {
        let d = self.dim;
        probes
            .chunks_exact(d)
            .chain(self.centers.chunks_exact(d))
            .map(|p| {
                let j = DMatrix::from_row_slice(d, d, &self.jacobian(p));
                j.singular_values().max()
            })
            .fold(0.0, f64::max)
    }
}

/// Constant `C_d = √d · 2^(3 + (d+1)/2) · π^((d-1)/2)` of the smoothness bound.
pub fn lipschitz_constant(d: usize) -> f64 {
    let d = d as f64;
    d.sqrt() * 2f64.powf(3.0 + (d + 1.0) / 2.0) * std::f64::consts::PI.powf((d - 1.0) / 2.0)
}

/// `C_d · σ^(d-1) · κ · pers_k`, the smoothness bound for simplification and augmentation losses.
pub fn lipschitz_bound(kappa: f64, sigma: f64, d: usize, pers_k: f64) -> f64 {
    lipschitz_constant(d) * sigma.powi(d as i32 - 1) * kappa * pers_k
}

/// `(⟨∇L(X), v(X)⟩, ‖∇L(X)‖²)`; equal whenever `v` interpolates `g` exactly.
pub fn descent_check(g: &SparseGradient, v: &Interpolant, x: &PointCloud) -> (f64, f64) {
    let mut inner = 0.0;
    let mut out = vec![0.0; x.dim()];
    for (k, &i) in g.support().iter().enumerate() {
        v.eval_into(x.point(i), &mut out);
        inner += g.vector(k).iter().zip(&out).map(|(a, b)| a * b).sum::<f64>();
    }
    (inner, g.norm_squared())
}

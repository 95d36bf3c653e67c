//! Synthetic point clouds.

use crate::error::{Error, Result};
use crate::rips::PointCloud;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// Unit circle in the plane.
    Circle,
    /// Unit sphere in `R^3`.
    Sphere,
    /// Uniform samples in `[-1, 1]^dim`.
    UniformBox(usize),
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(Shape::Circle),
            "sphere" => Ok(Shape::Sphere),
            "uniform-box" | "box" => Ok(Shape::UniformBox(2)),
            other => Err(Error::invalid(format!(
                "unknown shape `{other}` (expected circle, sphere or uniform-box)"
            ))),
        }
    }
}

impl Shape {
    pub fn dim(self) -> usize {
        match self {
            Shape::Circle => 2,
            Shape::Sphere => 3,
            Shape::UniformBox(d) => d,
        }
    }
}

/// `n` points sampled uniformly on `shape`, plus isotropic Gaussian noise.
pub fn generate(shape: Shape, n: usize, noise_std: f64, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("cannot generate an empty point cloud"));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::invalid(format!("noise std must be >= 0, got {noise_std}")));
    }
    let dim = shape.dim();
    if dim == 0 {
        return Err(Error::invalid("box dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).expect("validated std");
    let mut coords = Vec::with_capacity(n * dim);
    for _ in 0..n {
        match shape {
            Shape::Circle => {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                coords.extend([theta.cos(), theta.sin()]);
            }
            Shape::Sphere => {
                // normalized Gaussians are uniform on the sphere
                let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                coords.extend(v.iter().map(|c| c / norm));
            }
            Shape::UniformBox(d) => {
                coords.extend((0..d).map(|_| rng.random_range(-1.0..1.0)));
            }
        }
        if noise_std > 0.0 {
            let start = coords.len() - dim;
            for c in &mut coords[start..] {
                *c += noise.sample(&mut rng);
            }
        }
    }
    PointCloud::new(coords, dim)
}

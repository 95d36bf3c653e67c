//! Chain rule from diagram coordinates back to point coordinates.
//!
//! A birth or death value is the length of one edge `(i, j)`, so its
//! derivative with respect to `x_i` is the unit vector from `x_j` to `x_i`
//! (and the opposite for `x_j`). Only endpoints of critical edges of the
//! selected diagram points receive a nonzero gradient.

use crate::error::{Error, Result};
use crate::losses::Cotangent;
use crate::rips::{euclidean, Diagram, PointCloud};
use std::collections::BTreeMap;

/// Edges shorter than this have no usable direction.
pub const MIN_EDGE_LENGTH: f64 = 1e-12;

/// Default distance under which gradient support points are merged.
pub const DEFAULT_CONSOLIDATE_TOL: f64 = 1e-9;

/// The vanilla topological gradient: nonzero vectors on a sorted support.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGradient {
    n: usize,
    dim: usize,
    support: Vec<usize>,
    vectors: Vec<f64>,
}

impl SparseGradient {
    pub fn empty(n: usize, dim: usize) -> Self {
        Self {
            n,
            dim,
            support: Vec::new(),
            vectors: Vec::new(),
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Row-major `|I| × d` gradient vectors, aligned with [`Self::support`].
    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_squared(&self) -> f64 {
        self.vectors.iter().map(|v| v * v).sum()
    }

    /// Dense `n × d` gradient.
    pub fn densify(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.dim];
        for (k, &i) in self.support.iter().enumerate() {
            out[i * self.dim..(i + 1) * self.dim].copy_from_slice(self.vector(k));
        }
        out
    }
}

/// Pulls a diagram cotangent back to the points of `x` whose edges created the diagram.
pub fn pullback(d: &Diagram, cot: &Cotangent, x: &PointCloud) -> Result<SparseGradient> {
    let dim = x.dim();
    let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut push_edge = |edge: (usize, usize), coeff: f64| -> Result<()> {
        let (i, j) = edge;
        if i >= x.len() || j >= x.len() {
            return Err(Error::invalid(format!(
                "edge ({i}, {j}) out of range for {} points",
                x.len()
            )));
        }
        let len = euclidean(x.point(i), x.point(j));
        if len < MIN_EDGE_LENGTH {
            return Err(Error::DegenerateEdge(i, j, len));
        }
        let (pi, pj) = (x.point(i), x.point(j));
        for (end, sign) in [(i, 1.0), (j, -1.0)] {
            let slot = acc.entry(end).or_insert_with(|| vec![0.0; dim]);
            for k in 0..dim {
                slot[k] += sign * coeff * (pi[k] - pj[k]) / len;
            }
        }
        Ok(())
    };
    for e in &cot.entries {
        let p = d.points().get(e.index).ok_or_else(|| {
            Error::invalid(format!("cotangent index {} outside the diagram", e.index))
        })?;
        if e.d_birth != 0.0 {
            if let Some(edge) = p.birth_edge {
                push_edge(edge, e.d_birth)?;
            }
        }
        if e.d_death != 0.0 {
            if let Some(edge) = p.death_edge {
                push_edge(edge, e.d_death)?;
            }
        }
    }
    let mut g = SparseGradient::empty(x.len(), dim);
    for (i, v) in acc {
        if v.iter().any(|&c| c != 0.0) {
            g.support.push(i);
            g.vectors.extend_from_slice(&v);
        }
    }
    Ok(g)
}

/// Distinct interpolation centers with their target vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraints {
    pub dim: usize,
    /// Row-major `m × d`.
    pub centers: Vec<f64>,
    /// Row-major `m × d`.
    pub vectors: Vec<f64>,
    /// Support indices merged into each center.
    pub members: Vec<Vec<usize>>,
}

impl Constraints {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.centers[k * self.dim..(k + 1) * self.dim]
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }
}

/// Merges support points lying within `tol` of an earlier center, summing their vectors.
pub fn consolidate(g: &SparseGradient, x: &PointCloud, tol: f64) -> Constraints {
    let dim = x.dim();
    let mut out = Constraints {
        dim,
        centers: Vec::new(),
        vectors: Vec::new(),
        members: Vec::new(),
    };
    for (k, &i) in g.support().iter().enumerate() {
        let p = x.point(i);
        let existing = (0..out.members.len()).find(|&c| euclidean(out.center(c), p) <= tol);
        match existing {
            Some(c) => {
                for (slot, v) in out.vectors[c * dim..(c + 1) * dim].iter_mut().zip(g.vector(k)) {
                    *slot += v;
                }
                out.members[c].push(i);
            }
            None => {
                out.centers.extend_from_slice(p);
                out.vectors.extend_from_slice(g.vector(k));
                out.members.push(vec![i]);
            }
        }
    }
    // drop centers whose merged vectors cancelled
    let keep: Vec<usize> = (0..out.members.len())
        .filter(|&c| out.vector(c).iter().any(|&v| v != 0.0))
        .collect();
    if keep.len() < out.members.len() {
        let mut pruned = Constraints {
            dim,
            centers: Vec::with_capacity(keep.len() * dim),
            vectors: Vec::with_capacity(keep.len() * dim),
            members: Vec::with_capacity(keep.len()),
        };
        for c in keep {
            pruned.centers.extend_from_slice(out.center(c));
            pruned.vectors.extend_from_slice(out.vector(c));
            pruned.members.push(std::mem::take(&mut out.members[c]));
        }
        out = pruned;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{CotangentEntry, LossSpec};
    use crate::rips::{build_filtration, compute_persistence};

    #[test]
    fn two_point_merge_gradient() {
        let x = PointCloud::from_rows(&[[0.0, 0.0], [3.0, 0.0]]).unwrap();
        let c = build_filtration(&x, 1, None).unwrap();
        let d = compute_persistence(&c, &[0]).unwrap();
        let (_, cot) = LossSpec::simplify_death(vec![0]).unwrap().evaluate(&d).unwrap();
        let g = pullback(&d, &cot, &x).unwrap();
        assert_eq!(g.support(), &[0, 1]);
        assert_eq!(g.vectors(), &[-6.0, 0.0, 6.0, 0.0]);
    }

    #[test]
    fn empty_cotangent_gives_empty_support() {
        let x = PointCloud::from_rows(&[[0.0, 0.0], [3.0, 0.0]]).unwrap();
        let g = pullback(&Diagram::default(), &Cotangent::default(), &x).unwrap();
        assert!(g.is_empty());
        assert_eq!(g.densify(), vec![0.0; 4]);
    }

    #[test]
    fn degenerate_and_out_of_range_edges() {
        let x = PointCloud::from_rows(&[[0.0, 0.0], [0.0, 0.0]]).unwrap();
        let mut p = crate::rips::DiagramPoint::new(0, 0.0, 1.0);
        p.death_edge = Some((0, 1));
        let d = Diagram::new(vec![p]).unwrap();
        let cot = Cotangent {
            entries: vec![CotangentEntry {
                index: 0,
                d_birth: 0.0,
                d_death: 1.0,
            }],
        };
        assert!(matches!(pullback(&d, &cot, &x), Err(Error::DegenerateEdge(0, 1, _))));
        p.death_edge = Some((0, 5));
        let d = Diagram::new(vec![p]).unwrap();
        assert!(pullback(&d, &cot, &x).is_err());
    }

    fn grad(support: Vec<usize>, vectors: Vec<f64>, n: usize) -> SparseGradient {
        SparseGradient {
            n,
            dim: 2,
            support,
            vectors,
        }
    }

    #[test]
    fn consolidate_distinct_is_identity() {
        let x = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let g = grad(vec![0, 2], vec![1.0, 0.0, 0.0, 2.0], 3);
        let c = consolidate(&g, &x, DEFAULT_CONSOLIDATE_TOL);
        assert_eq!(c.centers, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(c.vectors, g.vectors);
        assert_eq!(c.members, vec![vec![0], vec![2]]);
    }

    #[test]
    fn consolidate_merges_coincident_points() {
        let x = PointCloud::from_rows(&[[1.0, 1.0], [1.0, 1.0], [5.0, 5.0]]).unwrap();
        let cancel = grad(vec![0, 1], vec![1.0, -2.0, -1.0, 2.0], 3);
        assert!(consolidate(&cancel, &x, DEFAULT_CONSOLIDATE_TOL).is_empty());

        let same = grad(vec![0, 1, 2], vec![1.0, -2.0, 1.0, -2.0, 3.0, 3.0], 3);
        let c = consolidate(&same, &x, DEFAULT_CONSOLIDATE_TOL);
        assert_eq!(c.len(), 2);
        assert_eq!(c.vector(0), &[2.0, -4.0]);
        assert_eq!(c.members[0], vec![0, 1]);
    }
}

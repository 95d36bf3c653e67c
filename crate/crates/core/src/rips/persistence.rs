use super::FilteredComplex;
use crate::error::{Error, Result};
use std::collections::HashMap;

/// One persistence pair, with the edges whose lengths realize birth and death.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagramPoint {
    pub dim: usize,
    pub birth: f64,
    pub death: f64,
    pub birth_edge: Option<(usize, usize)>,
    pub death_edge: Option<(usize, usize)>,
}

impl DiagramPoint {
    /// A point with no edge attribution (targets, hand-written diagrams).
    pub fn new(dim: usize, birth: f64, death: f64) -> Self {
        Self {
            dim,
            birth,
            death,
            birth_edge: None,
            death_edge: None,
        }
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_finite(&self) -> bool {
        self.death.is_finite()
    }

    pub fn is_zero_persistence(&self) -> bool {
        self.birth == self.death
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagram {
    points: Vec<DiagramPoint>,
}

impl Diagram {
    pub fn new(points: Vec<DiagramPoint>) -> Result<Self> {
        for p in &points {
            if p.birth.is_nan() || p.death.is_nan() || p.death < p.birth {
                return Err(Error::invalid(format!(
                    "diagram point ({}, {}) in dimension {} has death before birth",
                    p.birth, p.death, p.dim
                )));
            }
        }
        Ok(Self { points })
    }

    /// Convenience constructor from `(birth, death)` pairs in one dimension.
    pub fn from_pairs(dim: usize, pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(b, d)| DiagramPoint::new(dim, b, d))
                .collect(),
        )
    }

    pub fn points(&self) -> &[DiagramPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DiagramPoint> {
        self.points.iter()
    }

    /// Points of the given homology dimensions, keeping their relative order.
    pub fn restrict(&self, dims: &[usize]) -> Diagram {
        Diagram {
            points: self
                .points
                .iter()
                .filter(|p| dims.contains(&p.dim))
                .copied()
                .collect(),
        }
    }

    /// `(dim, birth, death)` triples sorted, for multiset comparisons.
    pub fn triples(&self) -> Vec<(usize, f64, f64)> {
        let mut t: Vec<_> = self.points.iter().map(|p| (p.dim, p.birth, p.death)).collect();
        t.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.total_cmp(&b.2))
        });
        t
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PersistenceOptions {
    /// Keep pairs whose birth equals their death.
    pub include_zero_persistence: bool,
}

pub fn compute_persistence(c: &FilteredComplex, dims: &[usize]) -> Result<Diagram> {
    compute_persistence_with(c, dims, PersistenceOptions::default())
}

pub(super) fn check_dims(c: &FilteredComplex, dims: &[usize]) -> Result<()> {
    let limit = c.max_dim().max(1);
    match dims.iter().find(|&&p| p >= limit) {
        Some(p) => Err(Error::invalid(format!(
            "homology dimension {p} needs simplices of dimension {}, complex stops at {}",
            p + 1,
            c.max_dim()
        ))),
        None => Ok(()),
    }
}

pub(super) fn finish(mut points: Vec<DiagramPoint>, dims: &[usize], opts: PersistenceOptions) -> Diagram {
    points.retain(|p| dims.contains(&p.dim) && (opts.include_zero_persistence || !p.is_zero_persistence()));
    points.sort_by(|a, b| {
        a.dim
            .cmp(&b.dim)
            .then(a.death.total_cmp(&b.death))
            .then(a.birth.total_cmp(&b.birth))
    });
    Diagram { points }
}

/// Persistence pairs of the filtration in the requested homology dimensions.
///
/// Dimension 0 is a union-find sweep over the edges (elder rule). Higher
/// dimensions reduce the anti-transposed boundary matrix, i.e. coboundary
/// columns processed from the youngest simplex down, which yields exactly
/// the pairs of the standard boundary reduction. Dimensions are handled in
/// ascending order so every simplex already known to kill a lower-dimensional
/// class is cleared (its column would reduce to zero).
pub fn compute_persistence_with(
    c: &FilteredComplex,
    dims: &[usize],
    opts: PersistenceOptions,
) -> Result<Diagram> {
    check_dims(c, dims)?;
    let Some(&top) = dims.iter().max() else {
        return Ok(Diagram::default());
    };
    let mut points = Vec::new();
    let mut cleared = vec![false; c.len()];

    zero_dimensional(c, &mut cleared, &mut points);
    let mut owner = vec![NONE; c.len()];
    for p in 1..=top {
        reduce_coboundaries(c, p, &mut cleared, &mut owner, &mut points);
    }
    Ok(finish(points, dims, opts))
}

const NONE: u32 = u32::MAX;

fn zero_dimensional(c: &FilteredComplex, cleared: &mut [bool], points: &mut Vec<DiagramPoint>) {
    let n = c.n_points();
    // vertices all enter at 0 and sort by index, so a vertex's position is its index
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(parent: &mut [u32], mut v: u32) -> u32 {
        while parent[v as usize] != v {
            let up = parent[parent[v as usize] as usize];
            parent[v as usize] = up;
            v = up;
        }
        v
    }
    for &e in c.positions_of_dim(1) {
        let s = c.simplex(e as usize);
        let (u, v) = (s.vertices()[0], s.vertices()[1]);
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru == rv {
            continue;
        }
        // the component with the younger root dies
        let (elder, younger) = if ru < rv { (ru, rv) } else { (rv, ru) };
        parent[younger as usize] = elder;
        cleared[e as usize] = true;
        points.push(DiagramPoint {
            dim: 0,
            birth: 0.0,
            death: s.value(),
            birth_edge: None,
            death_edge: s.critical_edge(),
        });
    }
    for v in 0..n as u32 {
        if find(&mut parent, v) == v {
            points.push(DiagramPoint::new(0, 0.0, f64::INFINITY));
        }
    }
}

fn reduce_coboundaries(
    c: &FilteredComplex,
    p: usize,
    cleared: &mut [bool],
    owner: &mut [u32],
    points: &mut Vec<DiagramPoint>,
) {
    // reduced columns that differ from the raw coboundary; others are regenerated on demand
    let mut reduced: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut work: Vec<u32> = Vec::new();
    let mut other: Vec<u32> = Vec::new();
    let mut sum: Vec<u32> = Vec::new();

    for &sigma in c.positions_of_dim(p).iter().rev() {
        if cleared[sigma as usize] {
            continue;
        }
        work.clear();
        c.cofacets_into(sigma as usize, &mut work);
        work.sort_unstable();
        let mut modified = false;
        while let Some(&pivot) = work.first() {
            let prev = owner[pivot as usize];
            if prev == NONE {
                break;
            }
            let column: &[u32] = match reduced.get(&prev) {
                Some(col) => col,
                None => {
                    other.clear();
                    c.cofacets_into(prev as usize, &mut other);
                    other.sort_unstable();
                    &other
                }
            };
            symmetric_difference(&work, column, &mut sum);
            std::mem::swap(&mut work, &mut sum);
            modified = true;
        }
        let s = c.simplex(sigma as usize);
        match work.first() {
            None => points.push(DiagramPoint {
                dim: p,
                birth: s.value(),
                death: f64::INFINITY,
                birth_edge: s.critical_edge(),
                death_edge: None,
            }),
            Some(&pivot) => {
                owner[pivot as usize] = sigma;
                cleared[pivot as usize] = true;
                if modified {
                    reduced.insert(sigma, work.clone());
                }
                let t = c.simplex(pivot as usize);
                points.push(DiagramPoint {
                    dim: p,
                    birth: s.value(),
                    death: t.value(),
                    birth_edge: s.critical_edge(),
                    death_edge: t.critical_edge(),
                });
            }
        }
    }
}

/// Z/2 column addition of two ascending index lists.
pub(super) fn symmetric_difference<T: Ord + Copy>(a: &[T], b: &[T], out: &mut Vec<T>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

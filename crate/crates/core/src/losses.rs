//! Loss functionals on persistence diagrams and their diagram-space gradients.

use crate::error::{Error, Result};
use crate::rips::{Diagram, DiagramPoint, PointCloud};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Largest diagram (per homology dimension) the exact registration matching accepts.
pub const MATCHING_BUDGET: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossFamily {
    /// `Σ (b - d)²`: pushes points to the diagonal.
    Simplify,
    /// `Σ d²`: shrinks death times.
    SimplifyDeath,
    /// `-Σ (b - d)²`: pushes points away from the diagonal.
    Augment,
    /// Squared 2-Wasserstein-style matching cost to a target diagram.
    Register,
}

impl LossFamily {
    pub fn name(self) -> &'static str {
        match self {
            LossFamily::Simplify => "simplify",
            LossFamily::SimplifyDeath => "simplify-death",
            LossFamily::Augment => "augment",
            LossFamily::Register => "register",
        }
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplify" => Ok(LossFamily::Simplify),
            "simplify-death" => Ok(LossFamily::SimplifyDeath),
            "augment" => Ok(LossFamily::Augment),
            "register" => Ok(LossFamily::Register),
            other => Err(Error::invalid(format!(
                "unknown loss family `{other}` (expected simplify, simplify-death, augment or register)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    All,
    TopK(usize),
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::ShapeMismatch {
                expected: format!("box corners of equal, non-zero length ({})", lower.len()),
                got: upper.len().to_string(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("box lower corner must be below the upper corner"));
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxRegularizer {
    pub region: BoxRegion,
    pub weight: f64,
}

/// What to optimize: a loss family on some homology dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct LossSpec {
    family: LossFamily,
    hom_dims: Vec<usize>,
    selection: Selection,
    target: Option<Diagram>,
    regularizer: Option<BoxRegularizer>,
}

impl LossSpec {
    pub fn new(
        family: LossFamily,
        hom_dims: Vec<usize>,
        selection: Selection,
        target: Option<Diagram>,
    ) -> Result<Self> {
        if hom_dims.is_empty() {
            return Err(Error::invalid("a loss needs at least one homology dimension"));
        }
        if selection == Selection::TopK(0) {
            return Err(Error::invalid("top-k selection needs k >= 1"));
        }
        if (family == LossFamily::Register) != target.is_some() {
            return Err(Error::invalid(
                "a target diagram is required for (and only for) the register loss",
            ));
        }
        let mut hom_dims = hom_dims;
        hom_dims.sort_unstable();
        hom_dims.dedup();
        Ok(Self {
            family,
            hom_dims,
            selection,
            target,
            regularizer: None,
        })
    }

    pub fn simplify(hom_dims: Vec<usize>) -> Result<Self> {
        Self::new(LossFamily::Simplify, hom_dims, Selection::All, None)
    }

    pub fn simplify_death(hom_dims: Vec<usize>) -> Result<Self> {
        Self::new(LossFamily::SimplifyDeath, hom_dims, Selection::All, None)
    }

    /// Augmentation of the single most persistent point.
    pub fn augment(hom_dims: Vec<usize>) -> Result<Self> {
        Self::new(LossFamily::Augment, hom_dims, Selection::TopK(1), None)
    }

    pub fn register(hom_dims: Vec<usize>, target: Diagram) -> Result<Self> {
        Self::new(LossFamily::Register, hom_dims, Selection::All, Some(target))
    }

    pub fn with_selection(mut self, selection: Selection) -> Result<Self> {
        if selection == Selection::TopK(0) {
            return Err(Error::invalid("top-k selection needs k >= 1"));
        }
        self.selection = selection;
        Ok(self)
    }

    pub fn with_regularizer(mut self, regularizer: BoxRegularizer) -> Self {
        self.regularizer = Some(regularizer);
        self
    }

    pub fn family(&self) -> LossFamily {
        self.family
    }

    pub fn hom_dims(&self) -> &[usize] {
        &self.hom_dims
    }

    pub fn selection(&self) -> Selection {
        self.selection
    }

    pub fn target(&self) -> Option<&Diagram> {
        self.target.as_ref()
    }

    pub fn regularizer(&self) -> Option<&BoxRegularizer> {
        self.regularizer.as_ref()
    }

    pub fn max_hom_dim(&self) -> usize {
        *self.hom_dims.last().expect("non-empty by construction")
    }

    /// Loss value and cotangent of the topological term on `d`.
    pub fn evaluate(&self, d: &Diagram) -> Result<(f64, Cotangent)> {
        match self.family {
            LossFamily::Simplify | LossFamily::SimplifyDeath => Ok(simplification_loss(d, self)),
            LossFamily::Augment => Ok(augmentation_loss(d, self)),
            LossFamily::Register => {
                registration_loss(d, self.target.as_ref().expect("validated"), self)
            }
        }
    }

    /// Indices of the diagram points the loss actually sums over.
    pub fn selected(&self, d: &Diagram) -> Vec<usize> {
        select(d, &self.hom_dims, self.selection)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CotangentEntry {
    pub index: usize,
    pub d_birth: f64,
    pub d_death: f64,
}

/// Partial derivatives of a loss with respect to diagram coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cotangent {
    pub entries: Vec<CotangentEntry>,
}

impl Cotangent {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

// finite points in `dims`, ranked by persistence desc, birth asc, index asc
fn select(d: &Diagram, dims: &[usize], selection: Selection) -> Vec<usize> {
    let mut idx: Vec<usize> = d
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_finite() && dims.contains(&p.dim))
        .map(|(i, _)| i)
        .collect();
    if let Selection::TopK(k) = selection {
        let pts = d.points();
        idx.sort_by(|&a, &b| {
            pts[b]
                .persistence()
                .total_cmp(&pts[a].persistence())
                .then(pts[a].birth.total_cmp(&pts[b].birth))
                .then(a.cmp(&b))
        });
        idx.truncate(k);
        idx.sort_unstable();
    }
    idx
}

/// `Σ (b - d)²` (family simplify) or `Σ d²` (family simplify-death) over the selected points.
pub fn simplification_loss(d: &Diagram, spec: &LossSpec) -> (f64, Cotangent) {
    let death_only = spec.family == LossFamily::SimplifyDeath;
    let mut loss = 0.0;
    let mut entries = Vec::new();
    for i in select(d, &spec.hom_dims, spec.selection) {
        let DiagramPoint { birth: b, death: q, .. } = d.points()[i];
        let (value, d_birth, d_death) = if death_only {
            (q * q, 0.0, 2.0 * q)
        } else {
            ((b - q) * (b - q), 2.0 * (b - q), -2.0 * (b - q))
        };
        loss += value;
        entries.push(CotangentEntry {
            index: i,
            d_birth,
            d_death,
        });
    }
    (loss, Cotangent { entries })
}

/// `-Σ (b - d)²` over the selected points.
pub fn augmentation_loss(d: &Diagram, spec: &LossSpec) -> (f64, Cotangent) {
    let mut loss = 0.0;
    let mut entries = Vec::new();
    for i in select(d, &spec.hom_dims, spec.selection) {
        let p = d.points()[i];
        let gap = p.birth - p.death;
        loss -= gap * gap;
        entries.push(CotangentEntry {
            index: i,
            d_birth: -2.0 * gap,
            d_death: 2.0 * gap,
        });
    }
    (loss, Cotangent { entries })
}

fn diagonal_cost(p: &DiagramPoint) -> f64 {
    let g = p.death - p.birth;
    0.5 * g * g
}

/// Optimal partial matching cost between the finite parts of `d` and `target`.
///
/// Points of `d` pay `‖p - q‖²` to their partner or `(d - b)² / 2` to reach
/// the diagonal; unmatched target points pay likewise. Solved exactly per
/// homology dimension on the diagonal-augmented square cost matrix.
pub fn registration_loss(d: &Diagram, target: &Diagram, spec: &LossSpec) -> Result<(f64, Cotangent)> {
    let mut loss = 0.0;
    let mut entries = Vec::new();
    for &dim in &spec.hom_dims {
        let ours: Vec<usize> = (0..d.len())
            .filter(|&i| {
                let p = &d.points()[i];
                p.dim == dim && p.is_finite()
            })
            .collect();
        let theirs: Vec<DiagramPoint> = target
            .iter()
            .filter(|q| q.dim == dim && q.is_finite())
            .copied()
            .collect();
        let size = ours.len().max(theirs.len());
        if size > MATCHING_BUDGET {
            return Err(Error::MatchingBudget {
                size,
                budget: MATCHING_BUDGET,
            });
        }
        let (m, t) = (ours.len(), theirs.len());
        let n = m + t;
        if n == 0 {
            continue;
        }
        // rows: our points then t diagonal slots; columns: target points then m diagonal slots
        let mut cost = vec![0.0; n * n];
        for r in 0..n {
            for col in 0..n {
                cost[r * n + col] = match (r < m, col < t) {
                    (true, true) => {
                        let p = &d.points()[ours[r]];
                        let q = &theirs[col];
                        (p.birth - q.birth).powi(2) + (p.death - q.death).powi(2)
                    }
                    (true, false) => diagonal_cost(&d.points()[ours[r]]),
                    (false, true) => diagonal_cost(&theirs[col]),
                    (false, false) => 0.0,
                };
            }
        }
        let assignment = min_cost_assignment(&cost, n);
        for (r, &col) in assignment.iter().enumerate() {
            loss += cost[r * n + col];
            if r < m {
                let p = &d.points()[ours[r]];
                let (d_birth, d_death) = if col < t {
                    let q = &theirs[col];
                    (2.0 * (p.birth - q.birth), 2.0 * (p.death - q.death))
                } else {
                    (p.birth - p.death, p.death - p.birth)
                };
                entries.push(CotangentEntry {
                    index: ours[r],
                    d_birth,
                    d_death,
                });
            }
        }
    }
    entries.sort_by_key(|e| e.index);
    Ok((loss, Cotangent { entries }))
}

/// Minimum-cost perfect assignment on an `n × n` row-major matrix
/// (Hungarian method with potentials). Returns the column of each row.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    // 1-based arrays; column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    col_of
}

/// `Σ_x dist(x, box)²` and its gradient `2 (x - clamp(x))`, row-major.
pub fn box_regularization(x: &PointCloud, region: &BoxRegion) -> Result<(f64, Vec<f64>)> {
    if region.dim() != x.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("box of dimension {}", x.dim()),
            got: region.dim().to_string(),
        });
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; x.coords().len()];
    for (i, p) in x.rows().enumerate() {
        for k in 0..x.dim() {
            let excess = p[k] - p[k].clamp(region.lower[k], region.upper[k]);
            value += excess * excess;
            grad[i * x.dim() + k] = 2.0 * excess;
        }
    }
    Ok((value, grad))
}

/// Sum of the `k` largest `|d - b|` over finite points.
pub fn pers_k(d: &Diagram, k: usize) -> f64 {
    let mut gaps: Vec<f64> = d
        .iter()
        .filter(|p| p.is_finite())
        .map(|p| p.persistence().abs())
        .collect();
    gaps.sort_by(|a, b| b.total_cmp(a));
    gaps.iter().take(k).sum()
}

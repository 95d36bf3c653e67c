//! Vietoris-Rips filtrations and their persistence diagrams.
//!
//! A simplex enters the filtration at the length of its longest edge; that
//! edge (the *critical edge*) is what the gradient machinery differentiates.

mod oracle;
mod persistence;

pub use oracle::reduce_oracle;
pub use persistence::{
    compute_persistence, compute_persistence_with, Diagram, DiagramPoint, PersistenceOptions,
};

use crate::error::{Error, Result};
use std::cmp::Ordering;

/// Default cap on the number of simplices a filtration may hold.
pub const DEFAULT_SIMPLEX_BUDGET: usize = 50_000_000;

/// Environment variable overriding [`DEFAULT_SIMPLEX_BUDGET`].
pub const BUDGET_ENV: &str = "TOPOFLOW_SIMPLEX_BUDGET";

/// Highest simplex dimension a filtration may contain (cavities are killed by tetrahedra).
pub const MAX_SIMPLEX_DIM: usize = 3;

// Dense rank -> position tables are used below this many slots, sorted sparse tables above.
const DENSE_INDEX_LIMIT: u64 = 1 << 25;
const DENSE_DISTANCE_LIMIT: usize = 2048;

/// Simplex budget honoring the `TOPOFLOW_SIMPLEX_BUDGET` override.
pub fn simplex_budget_from_env() -> usize {
    std::env::var(BUDGET_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_SIMPLEX_BUDGET)
}

/// `n` points in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    coords: Vec<f64>,
    dim: usize,
}

impl PointCloud {
    pub fn new(coords: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be at least 1"));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch {
                expected: format!("a non-empty multiple of {dim} coordinates"),
                got: coords.len().to_string(),
            });
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate {} at point {}",
                coords[pos],
                pos / dim
            )));
        }
        Ok(Self { coords, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::ShapeMismatch {
                    expected: format!("{dim} coordinates"),
                    got: format!("{} at row {i}", row.len()),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::new(coords, dim)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        euclidean(self.point(i), self.point(j))
    }

    /// The points at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> PointCloud {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        PointCloud {
            coords,
            dim: self.dim,
        }
    }

    /// Axis-aligned bounding box as `(lower, upper)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.rows() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A simplex of a Rips filtration together with its entry time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Simplex {
    verts: [u32; 4],
    len: u8,
    // positions inside `verts` of the critical edge endpoints
    edge: [u8; 2],
    value: f64,
}

impl Simplex {
    pub fn vertices(&self) -> &[u32] {
        &self.verts[..self.len as usize]
    }

    pub fn dim(&self) -> usize {
        self.len as usize - 1
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// The longest edge `(i, j)`, `i < j`, or `None` for a vertex.
    pub fn critical_edge(&self) -> Option<(usize, usize)> {
        (self.len >= 2).then(|| {
            (
                self.verts[self.edge[0] as usize] as usize,
                self.verts[self.edge[1] as usize] as usize,
            )
        })
    }

    fn filtration_cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.len.cmp(&other.len))
            .then_with(|| self.vertices().cmp(other.vertices()))
    }
}

/// Longest pairwise distance among `vertices` and the lexicographically
/// smallest pair achieving it.
pub fn filtration_value(vertices: &[usize], x: &PointCloud) -> Result<(f64, Option<(usize, usize)>)> {
    if let Some(&v) = vertices.iter().find(|&&v| v >= x.len()) {
        return Err(Error::invalid(format!(
            "vertex {v} out of range for {} points",
            x.len()
        )));
    }
    let mut sorted: Vec<u32> = vertices.iter().map(|&v| v as u32).collect();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("simplex vertices must be distinct"));
    }
    let (value, edge) = longest_edge(&sorted, |i, j| x.dist(i, j));
    Ok((
        value,
        edge.map(|(a, b)| (sorted[a] as usize, sorted[b] as usize)),
    ))
}

// `vertices` sorted; returns positions of the argmax pair, ties to the first in lex order.
fn longest_edge(vertices: &[u32], dist: impl Fn(usize, usize) -> f64) -> (f64, Option<(usize, usize)>) {
    let mut best = (0.0, None);
    for a in 0..vertices.len() {
        for b in a + 1..vertices.len() {
            let d = dist(vertices[a] as usize, vertices[b] as usize);
            if best.1.is_none() || d > best.0 {
                best = (d, Some((a, b)));
            }
        }
    }
    best
}

/// Distance lookup shared by the enumeration; dense for moderate `n`.
struct Distances<'a> {
    cloud: &'a PointCloud,
    table: Option<Vec<f64>>,
}

impl<'a> Distances<'a> {
    fn new(cloud: &'a PointCloud) -> Self {
        let n = cloud.len();
        let table = (n <= DENSE_DISTANCE_LIMIT).then(|| {
            let mut t = vec![0.0; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    let d = cloud.dist(i, j);
                    t[i * n + j] = d;
                    t[j * n + i] = d;
                }
            }
            t
        });
        Self { cloud, table }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        match &self.table {
            Some(t) => t[i * self.cloud.len() + j],
            None => self.cloud.dist(i, j),
        }
    }
}

/// Binomial coefficients `C(v, k)` for `v <= n`, `k <= 4`, saturating.
#[derive(Clone, Debug)]
struct Binomial {
    table: Vec<[u64; 5]>,
}

impl Binomial {
    fn new(n: usize) -> Self {
        let mut table = vec![[0u64; 5]; n + 1];
        for v in 0..=n {
            table[v][0] = 1;
            for k in 1..5 {
                table[v][k] = if v == 0 {
                    0
                } else {
                    table[v - 1][k - 1].saturating_add(table[v - 1][k])
                };
            }
        }
        Self { table }
    }

    #[inline]
    fn get(&self, v: usize, k: usize) -> u64 {
        self.table[v][k]
    }

    /// Colexicographic rank of a sorted vertex tuple.
    #[inline]
    fn rank(&self, verts: &[u32]) -> u64 {
        verts
            .iter()
            .enumerate()
            .map(|(i, &v)| self.get(v as usize, i + 1))
            .sum()
    }
}

#[derive(Clone, Debug)]
enum SimplexIndex {
    Dense(Vec<u32>),
    Sparse(Vec<(u64, u32)>),
}

impl SimplexIndex {
    #[inline]
    fn get(&self, rank: u64) -> Option<u32> {
        match self {
            SimplexIndex::Dense(t) => t.get(rank as usize).copied().filter(|&p| p != u32::MAX),
            SimplexIndex::Sparse(t) => t
                .binary_search_by_key(&rank, |&(r, _)| r)
                .ok()
                .map(|i| t[i].1),
        }
    }
}

/// All Rips simplices up to `max_dim`, in filtration order.
#[derive(Clone, Debug)]
pub struct FilteredComplex {
    n_points: usize,
    max_dim: usize,
    simplices: Vec<Simplex>,
    by_dim: Vec<Vec<u32>>,
    index: Vec<SimplexIndex>,
    binom: Binomial,
}

impl FilteredComplex {
    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    pub fn max_dim(&self) -> usize {
        self.max_dim
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn simplex(&self, pos: usize) -> &Simplex {
        &self.simplices[pos]
    }

    /// Filtration positions of the `dim`-simplices, ascending.
    pub fn positions_of_dim(&self, dim: usize) -> &[u32] {
        self.by_dim.get(dim).map_or(&[], |v| v.as_slice())
    }

    /// Position of the simplex spanned by `vertices` (sorted), if present.
    pub fn position(&self, vertices: &[u32]) -> Option<usize> {
        let k = vertices.len().checked_sub(1)?;
        if k > self.max_dim || vertices.iter().any(|&v| v as usize >= self.n_points) {
            return None;
        }
        self.index[k]
            .get(self.binom.rank(vertices))
            .map(|p| p as usize)
    }

    /// Facet positions of the simplex at `pos`, in vertex-removal order.
    pub fn facets(&self, pos: usize) -> Vec<usize> {
        let s = &self.simplices[pos];
        let verts = s.vertices();
        if verts.len() < 2 {
            return Vec::new();
        }
        let mut facet = [0u32; 4];
        (0..verts.len())
            .map(|skip| {
                let mut m = 0;
                for (i, &v) in verts.iter().enumerate() {
                    if i != skip {
                        facet[m] = v;
                        m += 1;
                    }
                }
                self.position(&facet[..m])
                    .expect("filtration is closed under faces")
            })
            .collect()
    }

    /// Appends the positions of all cofacets of the simplex at `pos` to `out`.
    pub(crate) fn cofacets_into(&self, pos: usize, out: &mut Vec<u32>) {
        let s = &self.simplices[pos];
        let k = s.len as usize;
        if k > self.max_dim {
            return;
        }
        let verts = s.vertices();
        let table = &self.index[k];
        // Rank of verts ∪ {w}: vertices below w keep their slot, those above shift up one.
        let mut upper_shifted = [0u64; 5];
        let mut lower_kept = [0u64; 5];
        for i in 0..k {
            lower_kept[i + 1] = lower_kept[i] + self.binom.get(verts[i] as usize, i + 1);
        }
        for i in (0..k).rev() {
            upper_shifted[i] = upper_shifted[i + 1] + self.binom.get(verts[i] as usize, i + 2);
        }
        let mut slot = 0;
        for w in 0..self.n_points as u32 {
            if slot < k && verts[slot] == w {
                slot += 1;
                continue;
            }
            let rank = lower_kept[slot]
                + self.binom.get(w as usize, slot + 1)
                + upper_shifted[slot];
            if let Some(p) = table.get(rank) {
                out.push(p);
            }
        }
    }
}

/// Builds the Rips filtration of `x` with the default simplex budget.
pub fn build_filtration(x: &PointCloud, max_dim: usize, max_radius: Option<f64>) -> Result<FilteredComplex> {
    build_filtration_with_budget(x, max_dim, max_radius, DEFAULT_SIMPLEX_BUDGET)
}

pub fn build_filtration_with_budget(
    x: &PointCloud,
    max_dim: usize,
    max_radius: Option<f64>,
    budget: usize,
) -> Result<FilteredComplex> {
    if max_dim > MAX_SIMPLEX_DIM {
        return Err(Error::invalid(format!(
            "max_dim {max_dim} exceeds the supported {MAX_SIMPLEX_DIM}"
        )));
    }
    if let Some(r) = max_radius {
        if !(r > 0.0) {
            return Err(Error::invalid(format!("max_radius must be positive, got {r}")));
        }
    }
    let n = x.len();
    if n >= u32::MAX as usize {
        return Err(Error::invalid("too many points"));
    }
    let binom = Binomial::new(n);
    let full_count: u128 = (0..=max_dim).map(|k| binom.get(n, k + 1) as u128).sum();
    if max_radius.is_none() && full_count > budget as u128 {
        return Err(Error::Capacity {
            count: full_count,
            budget,
        });
    }
    let radius = max_radius.unwrap_or(f64::INFINITY);
    let dist = Distances::new(x);

    // upper neighbor lists: j > i within the radius
    let neighbors: Vec<Vec<u32>> = (0..n)
        .map(|i| {
            (i + 1..n)
                .filter(|&j| dist.get(i, j) <= radius)
                .map(|j| j as u32)
                .collect()
        })
        .collect();

    let mut simplices = Vec::with_capacity(full_count.min(budget as u128) as usize);
    let mut push = |s: Simplex, count: &mut u128| -> Result<()> {
        *count += 1;
        if *count > budget as u128 {
            return Err(Error::Capacity {
                count: *count,
                budget,
            });
        }
        simplices.push(s);
        Ok(())
    };
    let mut count = 0u128;
    let mut prefix = [0u32; 4];
    for v in 0..n {
        prefix[0] = v as u32;
        push(
            Simplex {
                verts: prefix,
                len: 1,
                edge: [0, 0],
                value: 0.0,
            },
            &mut count,
        )?;
        if max_dim >= 1 {
            enumerate_cofaces(&neighbors, &dist, &mut prefix, 1, &neighbors[v], max_dim, &mut |s| {
                push(s, &mut count)
            })?;
        }
    }

    simplices.sort_unstable_by(Simplex::filtration_cmp);

    let mut by_dim = vec![Vec::new(); max_dim + 1];
    for (pos, s) in simplices.iter().enumerate() {
        by_dim[s.dim()].push(pos as u32);
    }
    let index = (0..=max_dim)
        .map(|k| {
            let slots = binom.get(n, k + 1);
            if slots <= DENSE_INDEX_LIMIT {
                let mut t = vec![u32::MAX; slots as usize];
                for &p in &by_dim[k] {
                    t[binom.rank(simplices[p as usize].vertices()) as usize] = p;
                }
                SimplexIndex::Dense(t)
            } else {
                let mut t: Vec<(u64, u32)> = by_dim[k]
                    .iter()
                    .map(|&p| (binom.rank(simplices[p as usize].vertices()), p))
                    .collect();
                t.sort_unstable();
                SimplexIndex::Sparse(t)
            }
        })
        .collect();

    Ok(FilteredComplex {
        n_points: n,
        max_dim,
        simplices,
        by_dim,
        index,
        binom,
    })
}

// Extends the clique `prefix[..len]` by every vertex of `candidates` (all adjacent to the
// whole prefix and larger than its last vertex), recursing up to `max_dim`.
fn enumerate_cofaces(
    neighbors: &[Vec<u32>],
    dist: &Distances<'_>,
    prefix: &mut [u32; 4],
    len: usize,
    candidates: &[u32],
    max_dim: usize,
    emit: &mut dyn FnMut(Simplex) -> Result<()>,
) -> Result<()> {
    for (ci, &w) in candidates.iter().enumerate() {
        prefix[len] = w;
        let (value, edge) = longest_edge(&prefix[..=len], |i, j| dist.get(i, j));
        let (a, b) = edge.expect("at least two vertices");
        emit(Simplex {
            verts: *prefix,
            len: (len + 1) as u8,
            edge: [a as u8, b as u8],
            value,
        })?;
        if len < max_dim {
            let next: Vec<u32> = intersect_sorted(&candidates[ci + 1..], &neighbors[w as usize]);
            if !next.is_empty() {
                enumerate_cofaces(neighbors, dist, prefix, len + 1, &next, max_dim, emit)?;
            }
        }
    }
    Ok(())
}

fn intersect_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> PointCloud {
        PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap()
    }

    #[test]
    fn point_cloud_rejects_bad_input() {
        assert!(PointCloud::new(vec![], 2).is_err());
        assert!(PointCloud::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(PointCloud::new(vec![1.0, f64::NAN], 2).is_err());
        assert!(PointCloud::new(vec![1.0], 0).is_err());
    }

    #[test]
    fn filtration_value_examples() {
        let x = PointCloud::from_rows(&[[0.0, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(filtration_value(&[0, 1], &x).unwrap(), (2.0, Some((0, 1))));

        let t = PointCloud::from_rows(&[[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]).unwrap();
        assert_eq!(filtration_value(&[0, 1, 2], &t).unwrap(), (5.0, Some((1, 2))));

        let h = 3f64.sqrt() / 2.0;
        let eq = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.5, h]]).unwrap();
        let (v, e) = filtration_value(&[2, 0, 1], &eq).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // all three sides within rounding; whichever is the max, ties pick the first in lex order
        let lens = [eq.dist(0, 1), eq.dist(0, 2), eq.dist(1, 2)];
        let max = lens.iter().cloned().fold(0.0, f64::max);
        let first = [(0, 1), (0, 2), (1, 2)][lens.iter().position(|&l| l == max).unwrap()];
        assert_eq!(e, Some(first));

        let exact = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(filtration_value(&[0, 1, 3], &exact).unwrap().1, Some((0, 3)));
        // both legs of a tall isosceles triangle tie: (0,2) beats (1,2)
        let iso = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.5, 3.0]]).unwrap();
        assert_eq!(iso.dist(0, 2), iso.dist(1, 2));
        assert_eq!(filtration_value(&[0, 1, 2], &iso).unwrap().1, Some((0, 2)));
        assert_eq!(filtration_value(&[0, 1], &exact).unwrap().1, Some((0, 1)));
        assert!(filtration_value(&[0, 0], &exact).is_err());
        assert!(filtration_value(&[0, 9], &exact).is_err());
    }

    #[test]
    fn collinear_points_complete_graph() {
        let x = PointCloud::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        let c = build_filtration(&x, 1, None).unwrap();
        assert_eq!(c.positions_of_dim(0).len(), 3);
        assert_eq!(c.positions_of_dim(1).len(), 3);
        assert_eq!(c.len(), 6);
    }

    #[test]
    fn unit_square_counts_and_diagonal_triangles() {
        let c = build_filtration(&square(), 2, None).unwrap();
        assert_eq!(c.len(), 14);
        let tris: Vec<_> = c
            .positions_of_dim(2)
            .iter()
            .map(|&p| c.simplex(p as usize))
            .collect();
        assert_eq!(tris.len(), 4);
        for t in tris {
            // every triangle of the square contains a diagonal
            assert!((t.value() - 2f64.sqrt()).abs() < 1e-15);
            let (i, j) = t.critical_edge().unwrap();
            assert!((i, j) == (0, 3) || (i, j) == (1, 2));
        }
    }

    #[test]
    fn radius_below_min_distance_keeps_vertices_only() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let coords: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let x = PointCloud::new(coords, 2).unwrap();
        let mut min = f64::INFINITY;
        for i in 0..100 {
            for j in i + 1..100 {
                min = min.min(x.dist(i, j));
            }
        }
        let c = build_filtration(&x, 2, Some(min * 0.999)).unwrap();
        assert_eq!(c.len(), 100);
    }

    #[test]
    fn faces_precede_cofaces_and_lookup_roundtrips() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let coords: Vec<f64> = (0..27).map(|_| rng.random::<f64>()).collect();
        let x = PointCloud::new(coords, 3).unwrap();
        let c = build_filtration(&x, 3, None).unwrap();
        assert_eq!(c.len(), 9 + 36 + 84 + 126);
        for (pos, s) in c.simplices().iter().enumerate() {
            assert_eq!(c.position(s.vertices()), Some(pos));
            for f in c.facets(pos) {
                assert!(f < pos);
            }
            let mut cof = Vec::new();
            c.cofacets_into(pos, &mut cof);
            let expected = if s.dim() < 3 { 9 - s.vertices().len() } else { 0 };
            assert_eq!(cof.len(), expected);
            for q in cof {
                assert!(q as usize > pos);
                assert!(c.facets(q as usize).contains(&pos));
            }
        }
    }

    #[test]
    fn budget_exceeded_is_reported() {
        let x = square();
        let err = build_filtration_with_budget(&x, 2, None, 10).unwrap_err();
        assert!(err.is_capacity());
        let err = build_filtration_with_budget(&x, 2, Some(10.0), 10).unwrap_err();
        assert!(err.is_capacity());
        assert!(build_filtration(&x, 4, None).is_err());
        assert!(build_filtration(&x, 1, Some(0.0)).is_err());
    }
}

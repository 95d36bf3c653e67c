use super::persistence::{check_dims, finish, symmetric_difference};
use super::{Diagram, DiagramPoint, FilteredComplex, PersistenceOptions};
use crate::error::Result;

/// Textbook left-to-right reduction of the full boundary matrix.
///
/// No clearing, no pivot table: each column is reduced by scanning all
/// earlier columns for a matching lowest entry. Quadratic in the number of
/// simplices; meant for cross-checking [`super::compute_persistence`] on
/// clouds of a few points.
pub fn reduce_oracle(c: &FilteredComplex, dims: &[usize]) -> Result<Diagram> {
    check_dims(c, dims)?;
    let total = c.len();
    let mut columns: Vec<Vec<usize>> = (0..total)
        .map(|j| {
            let mut f = c.facets(j);
            f.sort_unstable();
            f
        })
        .collect();

    let mut sum = Vec::new();
    for j in 0..total {
        while let Some(&low) = columns[j].last() {
            let Some(k) = (0..j).find(|&k| columns[k].last() == Some(&low)) else {
                break;
            };
            symmetric_difference(&columns[j], &columns[k], &mut sum);
            std::mem::swap(&mut columns[j], &mut sum);
        }
    }

    let mut paired = vec![false; total];
    let mut points = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        if let Some(&i) = col.last() {
            paired[i] = true;
            paired[j] = true;
            let (b, d) = (c.simplex(i), c.simplex(j));
            points.push(DiagramPoint {
                dim: b.dim(),
                birth: b.value(),
                death: d.value(),
                birth_edge: b.critical_edge(),
                death_edge: d.critical_edge(),
            });
        }
    }
    for (j, col) in columns.iter().enumerate() {
        let s = c.simplex(j);
        // top-dimensional simplices never get a chance to be paired upward
        if col.is_empty() && !paired[j] && s.dim() < c.max_dim().max(1) {
            points.push(DiagramPoint {
                dim: s.dim(),
                birth: s.value(),
                death: f64::INFINITY,
                birth_edge: s.critical_edge(),
                death_edge: None,
            });
        }
    }
    Ok(finish(points, dims, PersistenceOptions::default()))
}

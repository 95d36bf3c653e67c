use super::displace;
use crate::diffeo::Interpolant;
use crate::error::{Error, Result};
use crate::io::{read_text, write_text};
use crate::rips::PointCloud;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const FLOW_FORMAT: &str = "topoflow-flow";
pub const FLOW_VERSION: u32 = 1;

/// Fixed-point iterations allowed per inverse step.
pub const INVERT_MAX_ITER: usize = 50;
/// Sup-norm change at which an inverse fixed-point iteration stops.
pub const INVERT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowStep {
    pub field: Interpolant,
    pub lr: f64,
}

impl FlowStep {
    pub fn new(field: Interpolant, lr: f64) -> Self {
        Self { field, lr }
    }
}

/// A recorded sequence of steps `p ← p − λ_k ṽ_k(p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    dim: usize,
    steps: Vec<FlowStep>,
}

impl Flow {
    pub fn new(dim: usize) -> Self {
        Self { dim, steps: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> &[FlowStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, step: FlowStep) -> Result<()> {
        if step.field.dim() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: format!("a field on R^{}", self.dim),
                got: format!("R^{}", step.field.dim()),
            });
        }
        if !(step.lr > 0.0) || !step.lr.is_finite() {
            return Err(Error::invalid(format!("step size must be > 0, got {}", step.lr)));
        }
        self.steps.push(step);
        Ok(())
    }

    fn check(&self, p: &PointCloud) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: format!("points in R^{}", self.dim),
                got: format!("R^{}", p.dim()),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = FlowFile {
            format: FLOW_FORMAT.into(),
            version: FLOW_VERSION,
            dim: self.dim,
            steps: self
                .steps
                .iter()
                .map(|s| StepFile {
                    lr: s.lr,
                    sigma: s.field.sigma(),
                    jitter_used: s.field.jitter_used(),
                    kappa: s.field.kappa().is_finite().then(|| s.field.kappa()),
                    centers: s.field.centers().to_vec(),
                    coefficients: s.field.coefficients().to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FlowFile = serde_json::from_str(text)?;
        if file.format != FLOW_FORMAT {
            return Err(Error::invalid(format!("not a flow file (format `{}`)", file.format)));
        }
        if file.version != FLOW_VERSION {
            return Err(Error::invalid(format!(
                "unsupported flow file version {} (expected {FLOW_VERSION})",
                file.version
            )));
        }
        if file.dim == 0 {
            return Err(Error::invalid("flow dimension must be at least 1"));
        }
        let mut flow = Flow::new(file.dim);
        for (k, s) in file.steps.into_iter().enumerate() {
            Interpolant::from_stored(
                file.dim,
                s.sigma,
                s.centers,
                s.coefficients,
                s.jitter_used,
                s.kappa.unwrap_or(f64::INFINITY),
            )
            .and_then(|field| flow.push(FlowStep::new(field, s.lr)))
            .map_err(|e| Error::invalid(format!("flow step {k}: {e}")))?;
        }
        Ok(flow)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_text(path.as_ref())?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowFile {
    format: String,
    version: u32,
    dim: usize,
    steps: Vec<StepFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepFile {
    lr: f64,
    sigma: f64,
    jitter_used: f64,
    kappa: Option<f64>,
    centers: Vec<f64>,
    coefficients: Vec<f64>,
}

/// Pushes points forward through every step of the flow.
pub fn apply_flow(f: &Flow, p: &PointCloud) -> Result<PointCloud> {
    f.check(p)?;
    let mut coords = p.coords().to_vec();
    for s in &f.steps {
        displace(&mut coords, &s.field, s.lr)?;
    }
    PointCloud::new(coords, p.dim())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInversion {
    /// Index of the step in the flow.
    pub step: usize,
    /// `λ_k` times the global Lipschitz bound of the field.
    pub contraction: f64,
    /// Points whose fixed-point iteration did not converge.
    pub unconverged: usize,
    pub max_iterations: usize,
}

impl StepInversion {
    pub fn is_contractive(&self) -> bool {
        self.contraction < 1.0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InversionReport {
    pub steps: Vec<StepInversion>,
}

impl InversionReport {
    pub fn converged(&self) -> bool {
        self.steps.iter().all(|s| s.unconverged == 0)
    }

    /// Steps that were not certified contractive or failed to converge.
    pub fn warnings(&self) -> impl Iterator<Item = &StepInversion> {
        self.steps
            .iter()
            .filter(|s| !s.is_contractive() || s.unconverged > 0)
    }
}

// solves q = p + λ v(q) by fixed-point iteration started at p
fn invert_point(p: &[f64], v: &Interpolant, lr: f64, out: &mut [f64]) -> (bool, usize) {
    let d = p.len();
    let mut q = p.to_vec();
    let mut field = vec![0.0; d];
    for it in 1..=INVERT_MAX_ITER {
        v.eval_into(&q, &mut field);
        let mut change: f64 = 0.0;
        for k in 0..d {
            let next = p[k] + lr * field[k];
            change = change.max((next - q[k]).abs());
            q[k] = next;
        }
        if !q.iter().all(|c| c.is_finite()) {
            break;
        }
        if change <= INVERT_TOL {
            out.copy_from_slice(&q);
            return (true, it);
        }
    }
    v.eval_into(p, &mut field);
    for k in 0..d {
        out[k] = p[k] + lr * field[k];
    }
    (false, INVERT_MAX_ITER)
}

/// Pulls points back through the flow, last step first.
///
/// Points whose fixed-point iteration fails fall back to the explicit
/// estimate `p + λ v(p)`; the report counts them per step.
pub fn invert_flow(f: &Flow, p: &PointCloud) -> Result<(PointCloud, InversionReport)> {
    f.check(p)?;
    let d = p.dim();
    let mut coords = p.coords().to_vec();
    let mut report = InversionReport::default();
    for (k, s) in f.steps.iter().enumerate().rev() {
        let mut out = vec![0.0; coords.len()];
        let stats: Vec<(bool, usize)> = out
            .par_chunks_mut(d)
            .zip(coords.par_chunks(d))
            .map(|(o, q)| invert_point(q, &s.field, s.lr, o))
            .collect();
        report.steps.push(StepInversion {
            step: k,
            contraction: s.lr * s.field.lipschitz_upper(),
            unconverged: stats.iter().filter(|(ok, _)| !ok).count(),
            max_iterations: stats.iter().map(|&(_, it)| it).max().unwrap_or(0),
        });
        coords = out;
    }
    Ok((PointCloud::new(coords, d)?, report))
}

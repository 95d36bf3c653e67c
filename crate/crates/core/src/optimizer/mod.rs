//! Gradient descent on point clouds: vanilla and diffeomorphic steps,
//! subsampled epochs, stopping rules and flow recording.
//!
//! Random draws come from one seeded stream in a fixed order: the
//! validation subsamples of the initial cloud, then per epoch the training
//! subsample followed by that epoch's validation subsamples. Subsample
//! losses may be evaluated in parallel but are summed in draw order, so
//! results do not depend on the thread count.

mod flow;
mod trace;

pub use flow::{apply_flow, invert_flow, Flow, FlowStep, InversionReport, StepInversion, FLOW_FORMAT, FLOW_VERSION};
pub use trace::{EpochRecord, RunTrace, TRACE_HEADER};

use crate::diffeo::{fit_constraints, lipschitz_bound, Interpolant, JitterPolicy};
use crate::error::{Error, Result};
use crate::gradient::{consolidate, pullback, SparseGradient, DEFAULT_CONSOLIDATE_TOL};
use crate::losses::{box_regularization, pers_k, Cotangent, LossFamily, LossSpec};
use crate::rips::{build_filtration_with_budget, compute_persistence, simplex_budget_from_env, Diagram, PointCloud};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Vanilla,
    Diffeo,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Mode::Vanilla),
            "diffeo" => Ok(Mode::Diffeo),
            other => Err(Error::invalid(format!("unknown mode `{other}` (expected vanilla or diffeo)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Vanilla => "vanilla",
            Mode::Diffeo => "diffeo",
        })
    }
}

/// When to stop before the epoch limit, judged on validation losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Validation loss `<= eps`.
    Threshold { eps: f64 },
    /// Exponential moving average of validation losses `<= eps`.
    Ema { decay: f64, eps: f64 },
    /// Validation loss has dropped at least `delta` below its initial value.
    Increase { delta: f64 },
    /// Run all epochs.
    Never,
}

impl StopRule {
    /// Threshold at zero for losses bounded below by zero, no early stop for augmentation.
    pub fn default_for(family: LossFamily) -> Self {
        match family {
            LossFamily::Augment => StopRule::Never,
            _ => StopRule::Threshold { eps: 0.0 },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = match *self {
            StopRule::Threshold { eps } => eps.is_nan(),
            StopRule::Ema { decay, eps } => !(0.0..1.0).contains(&decay) || eps.is_nan(),
            StopRule::Increase { delta } => !(delta >= 0.0),
            StopRule::Never => false,
        };
        if bad {
            return Err(Error::invalid(format!("invalid stopping rule {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Threshold,
    Ema,
    Increase,
    MaxEpochs,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Threshold => "validation loss reached the threshold",
            StopReason::Ema => "moving average of the validation loss reached the threshold",
            StopReason::Increase => "validation loss improved by the requested amount",
            StopReason::MaxEpochs => "epoch limit reached",
        })
    }
}

struct StopState {
    rule: StopRule,
    ema: Option<f64>,
    initial: Option<f64>,
}

impl StopState {
    fn new(rule: StopRule) -> Self {
        Self {
            rule,
            ema: None,
            initial: None,
        }
    }

    fn observe(&mut self, val: f64) -> Option<StopReason> {
        let initial = *self.initial.get_or_insert(val);
        match self.rule {
            StopRule::Threshold { eps } => (val <= eps).then_some(StopReason::Threshold),
            StopRule::Ema { decay, eps } => {
                let ema = match self.ema {
                    Some(prev) => decay * prev + (1.0 - decay) * val,
                    None => val,
                };
                self.ema = Some(ema);
                (ema <= eps).then_some(StopReason::Ema)
            }
            StopRule::Increase { delta } => (initial - val >= delta && val < initial).then_some(StopReason::Increase),
            StopRule::Never => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub mode: Mode,
    /// Step size λ.
    pub lr: f64,
    /// Kernel bandwidth σ (diffeo mode).
    pub sigma: f64,
    /// Subsample size `s`; `None` uses the whole cloud.
    pub subsample: Option<usize>,
    /// Maximum number of epochs `T`.
    pub epochs: usize,
    pub stop: StopRule,
    /// Validation repetitions `K`; `None` means `⌈n / s⌉`.
    pub val_reps: Option<usize>,
    /// Validate every this many epochs (and always after the last one).
    pub val_every: usize,
    pub seed: u64,
    pub jitter: JitterPolicy,
    pub consolidate_tol: f64,
    /// Record elapsed seconds in the trace; zeros otherwise.
    pub record_clock: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Diffeo,
            lr: 0.1,
            sigma: 0.1,
            subsample: None,
            epochs: 250,
            stop: StopRule::Threshold { eps: 0.0 },
            val_reps: None,
            val_every: 1,
            seed: 0,
            jitter: JitterPolicy::default(),
            consolidate_tol: DEFAULT_CONSOLIDATE_TOL,
            record_clock: true,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("bandwidth must be > 0, got {}", self.sigma)));
        }
        if let Some(s) = self.subsample {
            if s == 0 || s > n {
                return Err(Error::invalid(format!("subsample size must be in 1..={n}, got {s}")));
            }
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.val_reps == Some(0) {
            return Err(Error::invalid("validation repetitions must be at least 1"));
        }
        if self.val_every == 0 {
            return Err(Error::invalid("validation interval must be at least 1"));
        }
        if !(self.consolidate_tol >= 0.0) {
            return Err(Error::invalid("consolidation tolerance must be >= 0"));
        }
        self.stop.validate()
    }

    /// `K`, defaulting to `⌈n / s⌉`.
    pub fn validation_reps(&self, n: usize) -> usize {
        self.val_reps
            .unwrap_or_else(|| self.subsample.map_or(1, |s| n.div_ceil(s)))
    }
}

/// Loss plus the Rips settings needed to evaluate it on a cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct LossPipeline {
    pub loss: LossSpec,
    pub max_radius: Option<f64>,
    pub budget: usize,
}

/// Everything computed from one cloud: loss value, diagram and gradients.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// Topological loss plus weighted regularizer.
    pub loss: f64,
    pub topo_loss: f64,
    pub diagram: Diagram,
    pub cotangent: Cotangent,
    pub gradient: SparseGradient,
    /// Weighted dense regularizer gradient, when configured.
    pub reg_gradient: Option<Vec<f64>>,
}

impl LossPipeline {
    /// Budget read from the environment override, if any.
    pub fn new(loss: LossSpec) -> Self {
        Self {
            loss,
            max_radius: None,
            budget: simplex_budget_from_env(),
        }
    }

    pub fn with_max_radius(mut self, r: Option<f64>) -> Self {
        self.max_radius = r;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    /// Simplex dimension needed for the loss's homology dimensions.
    pub fn max_dim(&self) -> usize {
        self.loss.max_hom_dim() + 1
    }

    pub fn diagram(&self, x: &PointCloud) -> Result<Diagram> {
        let c = build_filtration_with_budget(x, self.max_dim(), self.max_radius, self.budget)?;
        compute_persistence(&c, self.loss.hom_dims())
    }

    fn regularizer(&self, x: &PointCloud) -> Result<Option<(f64, Vec<f64>)>> {
        match self.loss.regularizer() {
            Some(r) => {
                let (value, mut grad) = box_regularization(x, &r.region)?;
                grad.iter_mut().for_each(|g| *g *= r.weight);
                Ok(Some((r.weight * value, grad)))
            }
            None => Ok(None),
        }
    }

    /// Loss value only.
    pub fn loss_value(&self, x: &PointCloud) -> Result<f64> {
        let (topo, _) = self.loss.evaluate(&self.diagram(x)?)?;
        Ok(topo + self.regularizer(x)?.map_or(0.0, |r| r.0))
    }

    pub fn evaluate(&self, x: &PointCloud) -> Result<Evaluation> {
        let diagram = self.diagram(x)?;
        let (topo_loss, cotangent) = self.loss.evaluate(&diagram)?;
        let gradient = pullback(&diagram, &cotangent, x)?;
        let reg = self.regularizer(x)?;
        Ok(Evaluation {
            loss: topo_loss + reg.as_ref().map_or(0.0, |r| r.0),
            topo_loss,
            diagram,
            cotangent,
            gradient,
            reg_gradient: reg.map(|r| r.1),
        })
    }

    /// `Pers_k` of the selected diagram points, `k` = number of selected points.
    pub fn selected_pers_k(&self, e: &Evaluation) -> f64 {
        let sel = self.loss.selected(&e.diagram);
        let pts: Vec<_> = sel.iter().map(|&i| e.diagram.points()[i]).collect();
        match Diagram::new(pts) {
            Ok(d) => pers_k(&d, sel.len()),
            Err(_) => 0.0,
        }
    }
}

/// `X - λ ∇L(X)` on the whole cloud, plus the regularizer step.
pub fn vanilla_step(x: &PointCloud, pipeline: &LossPipeline, lr: f64) -> Result<PointCloud> {
    check_lr(lr)?;
    let e = pipeline.evaluate(x)?;
    let mut coords = x.coords().to_vec();
    apply_sparse(&mut coords, &e.gradient, None, lr);
    if let Some(reg) = &e.reg_gradient {
        apply_dense(&mut coords, reg, None, x.dim(), lr);
    }
    PointCloud::new(coords, x.dim())
}

/// `X - λ ṽ(X)` with `ṽ` interpolating the gradient on its support.
///
/// Returns the cloud unchanged (up to the regularizer) and no interpolant when
/// the gradient vanishes.
pub fn diffeo_step(
    x: &PointCloud,
    pipeline: &LossPipeline,
    lr: f64,
    sigma: f64,
) -> Result<(PointCloud, Option<Interpolant>)> {
    check_lr(lr)?;
    let e = pipeline.evaluate(x)?;
    let v = fit_gradient(&e.gradient, x, sigma, &JitterPolicy::default(), DEFAULT_CONSOLIDATE_TOL)?;
    let mut coords = x.coords().to_vec();
    if let Some(v) = &v {
        displace(&mut coords, v, lr)?;
    }
    if let Some(reg) = &e.reg_gradient {
        apply_dense(&mut coords, reg, None, x.dim(), lr);
    }
    Ok((PointCloud::new(coords, x.dim())?, v))
}

fn check_lr(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("learning rate must be > 0, got {lr}")))
    }
}

fn fit_gradient(
    g: &SparseGradient,
    x: &PointCloud,
    sigma: f64,
    jitter: &JitterPolicy,
    tol: f64,
) -> Result<Option<Interpolant>> {
    let c = consolidate(g, x, tol);
    if c.is_empty() {
        return Ok(None);
    }
    fit_constraints(&c, sigma, jitter).map(Some)
}

// p <- p - λ v(p); shared with flow replay so both take the same arithmetic path
pub(crate) fn displace(coords: &mut [f64], v: &Interpolant, lr: f64) -> Result<()> {
    let field = v.evaluate(coords)?;
    for (p, f) in coords.iter_mut().zip(&field) {
        *p -= lr * f;
    }
    Ok(())
}

// gradient rows live on a subsample: `map[k]` is the full index of subsample point `k`
fn apply_sparse(coords: &mut [f64], g: &SparseGradient, map: Option<&[usize]>, lr: f64) {
    let d = g.dim();
    for (k, &i) in g.support().iter().enumerate() {
        let row = map.map_or(i, |m| m[i]);
        for (p, v) in coords[row * d..(row + 1) * d].iter_mut().zip(g.vector(k)) {
            *p -= lr * v;
        }
    }
}

fn apply_dense(coords: &mut [f64], grad: &[f64], map: Option<&[usize]>, d: usize, lr: f64) {
    for (k, row_grad) in grad.chunks_exact(d).enumerate() {
        let row = map.map_or(k, |m| m[k]);
        for (p, v) in coords[row * d..(row + 1) * d].iter_mut().zip(row_grad) {
            *p -= lr * v;
        }
    }
}

fn draw_subsample(rng: &mut ChaCha8Rng, n: usize, s: usize) -> Vec<usize> {
    let mut idx = sample(rng, n, s).into_vec();
    idx.sort_unstable();
    idx
}

/// Mean loss over `reps` independent uniform `s`-subsamples.
///
/// With `s` absent or `s >= n` this is the exact loss on `x` and draws nothing.
pub fn validation_loss(
    x: &PointCloud,
    pipeline: &LossPipeline,
    s: Option<usize>,
    reps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if reps == 0 {
        return Err(Error::invalid("validation repetitions must be at least 1"));
    }
    let n = x.len();
    match s {
        Some(s) if s < n => {
            if s == 0 {
                return Err(Error::invalid("subsample size must be at least 1"));
            }
            let draws: Vec<Vec<usize>> = (0..reps).map(|_| draw_subsample(rng, n, s)).collect();
            let losses: Vec<Result<f64>> = draws
                .par_iter()
                .map(|idx| pipeline.loss_value(&x.subset(idx)))
                .collect();
            let mut total = 0.0;
            for l in losses {
                total += l?;
            }
            Ok(total / reps as f64)
        }
        _ => pipeline.loss_value(x),
    }
}

/// Output of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub cloud: PointCloud,
    pub flow: Flow,
    pub trace: RunTrace,
    pub stop: StopReason,
}

/// Subsampled vanilla or diffeomorphic gradient descent.
pub fn run(x0: &PointCloud, pipeline: &LossPipeline, cfg: &OptimConfig) -> Result<RunOutput> {
    run_with(x0, pipeline, cfg, |_| {})
}

/// [`run`] with a callback invoked after every completed epoch.
pub fn run_with(
    x0: &PointCloud,
    pipeline: &LossPipeline,
    cfg: &OptimConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunOutput> {
    let n = x0.len();
    let dim = x0.dim();
    cfg.validate(n)?;
    let start = Instant::now();
    let clock = || if cfg.record_clock { start.elapsed().as_secs_f64() } else { 0.0 };
    let subsample = cfg.subsample.filter(|&s| s < n);
    let reps = cfg.validation_reps(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stop = StopState::new(cfg.stop);
    let mut flow = Flow::new(dim);

    // full-batch runs reuse the validation evaluation as the next gradient
    let mut cached: Option<Evaluation> = None;
    let validate = |x: &PointCloud, rng: &mut ChaCha8Rng, cached: &mut Option<Evaluation>| -> Result<f64> {
        match subsample {
            Some(s) => validation_loss(x, pipeline, Some(s), reps, rng),
            None => {
                let e = pipeline.evaluate(x)?;
                let loss = e.loss;
                *cached = Some(e);
                Ok(loss)
            }
        }
    };

    let mut x = x0.clone();
    let initial = validate(&x, &mut rng, &mut cached).map_err(|e| e.at_epoch(0))?;
    let mut trace = RunTrace::new(initial);
    if let Some(reason) = stop.observe(initial) {
        return Ok(RunOutput {
            cloud: x,
            flow,
            trace,
            stop: reason,
        });
    }

    for epoch in 1..=cfg.epochs {
        let mut step = || -> Result<(PointCloud, EpochRecord, Option<FlowStep>)> {
            let (idx, e) = match subsample {
                Some(s) => {
                    let idx = draw_subsample(&mut rng, n, s);
                    let e = pipeline.evaluate(&x.subset(&idx))?;
                    (Some(idx), e)
                }
                None => {
                    let e = match cached.take() {
                        Some(e) => e,
                        None => pipeline.evaluate(&x)?,
                    };
                    (None, e)
                }
            };
            let mut coords = x.coords().to_vec();
            let mut record = EpochRecord {
                epoch,
                train_loss: e.loss,
                val_loss: None,
                support: e.gradient.len(),
                kappa: None,
                lip_bound: None,
                seconds: 0.0,
            };
            let mut recorded = None;
            match cfg.mode {
                Mode::Vanilla => {
                    apply_sparse(&mut coords, &e.gradient, idx.as_deref(), cfg.lr);
                    if let Some(reg) = &e.reg_gradient {
                        apply_dense(&mut coords, reg, idx.as_deref(), dim, cfg.lr);
                    }
                }
                Mode::Diffeo => {
                    let sub = idx.as_ref().map(|i| x.subset(i));
                    let v = fit_gradient(
                        &e.gradient,
                        sub.as_ref().unwrap_or(&x),
                        cfg.sigma,
                        &cfg.jitter,
                        cfg.consolidate_tol,
                    )?;
                    if let Some(v) = v {
                        displace(&mut coords, &v, cfg.lr)?;
                        record.kappa = Some(v.kappa());
                        record.lip_bound = Some(lipschitz_bound(
                            v.kappa(),
                            cfg.sigma,
                            dim,
                            pipeline.selected_pers_k(&e),
                        ));
                        recorded = Some(FlowStep::new(v, cfg.lr));
                    }
                    if pipeline.loss.regularizer().is_some() {
                        // the field is interpolated from the subsample, the regularizer acts on every point
                        let (_, reg) = pipeline.regularizer(&x)?.expect("configured");
                        apply_dense(&mut coords, &reg, None, dim, cfg.lr);
                    }
                }
            }
            Ok((PointCloud::new(coords, dim)?, record, recorded))
        };
        let (next, mut record, recorded) = step().map_err(|e| e.at_epoch(epoch))?;
        x = next;
        if let Some(s) = recorded {
            flow.push(s)?;
        }
        let reason = if epoch % cfg.val_every == 0 || epoch == cfg.epochs {
            let val = validate(&x, &mut rng, &mut cached).map_err(|e| e.at_epoch(epoch))?;
            record.val_loss = Some(val);
            stop.observe(val)
        } else {
            None
        };
        record.seconds = clock();
        on_epoch(&record);
        trace.records.push(record);
        if let Some(reason) = reason {
            return Ok(RunOutput {
                cloud: x,
                flow,
                trace,
                stop: reason,
            });
        }
    }
    Ok(RunOutput {
        cloud: x,
        flow,
        trace,
        stop: StopReason::MaxEpochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{BoxRegion, BoxRegularizer};

    fn two_points() -> PointCloud {
        PointCloud::from_rows(&[[0.0, 0.0], [3.0, 0.0]]).unwrap()
    }

    fn death_pipeline(dims: Vec<usize>) -> LossPipeline {
        LossPipeline::new(LossSpec::simplify_death(dims).unwrap())
    }

    #[test]
    fn vanilla_two_point_step() {
        let x = vanilla_step(&two_points(), &death_pipeline(vec![0]), 0.1).unwrap();
        assert!((x.point(0)[0] - 0.6).abs() < 1e-12);
        assert!((x.point(1)[0] - 2.4).abs() < 1e-12);
        assert!((x.dist(0, 1) - 1.8).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let x = PointCloud::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let p = death_pipeline(vec![1]);
        assert_eq!(vanilla_step(&x, &p, 0.1).unwrap(), x);
        let (y, v) = diffeo_step(&x, &p, 0.1, 0.1).unwrap();
        assert_eq!(y, x);
        assert!(v.is_none());
    }

    #[test]
    fn diffeo_moves_support_by_gradient() {
        let x = PointCloud::from_rows(&[[0.0, 0.0], [3.0, 0.0], [1.5, 0.05]]).unwrap();
        let p = death_pipeline(vec![0]);
        let e = p.evaluate(&x).unwrap();
        let (y, v) = diffeo_step(&x, &p, 0.1, 0.5).unwrap();
        let v = v.unwrap();
        for (k, &i) in e.gradient.support().iter().enumerate() {
            for c in 0..2 {
                let moved = x.point(i)[c] - y.point(i)[c];
                assert!((moved - 0.1 * e.gradient.vector(k)[c]).abs() < 1e-8);
            }
        }
        assert_eq!(v.len(), e.gradient.len());
    }

    #[test]
    fn immediate_stop_gives_empty_flow() {
        let x = two_points();
        let cfg = OptimConfig {
            stop: StopRule::Threshold { eps: f64::INFINITY },
            ..OptimConfig::default()
        };
        let out = run(&x, &death_pipeline(vec![0]), &cfg).unwrap();
        assert_eq!(out.cloud, x);
        assert!(out.flow.is_empty());
        assert!(out.trace.records.is_empty());
        assert_eq!(out.stop, StopReason::Threshold);
    }

    #[test]
    fn validation_loss_is_exact_without_subsampling() {
        let x = crate::generate::generate(crate::generate::Shape::Circle, 30, 0.05, 3).unwrap();
        let p = death_pipeline(vec![1]);
        let exact = p.loss_value(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in [1, 3, 7] {
            assert_eq!(validation_loss(&x, &p, Some(30), k, &mut rng).unwrap(), exact);
            assert_eq!(validation_loss(&x, &p, None, k, &mut rng).unwrap(), exact);
        }
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let single = validation_loss(&x, &p, Some(10), 1, &mut a).unwrap();
        let idx = draw_subsample(&mut b, 30, 10);
        assert_eq!(single, p.loss_value(&x.subset(&idx)).unwrap());
    }

    #[test]
    fn vanilla_subsample_moves_at_most_s_points() {
        let x = crate::generate::generate(crate::generate::Shape::Circle, 60, 0.05, 4).unwrap();
        let cfg = OptimConfig {
            mode: Mode::Vanilla,
            subsample: Some(12),
            epochs: 1,
            stop: StopRule::Never,
            record_clock: false,
            ..OptimConfig::default()
        };
        let out = run(&x, &LossPipeline::new(LossSpec::simplify(vec![1]).unwrap()), &cfg).unwrap();
        let moved = (0..60).filter(|&i| out.cloud.point(i) != x.point(i)).count();
        assert!(moved <= 12);
        assert!(out.flow.is_empty());
    }

    #[test]
    fn regularizer_pulls_points_into_the_box() {
        let x = PointCloud::from_rows(&[[2.0, 0.0], [0.0, 0.0]]).unwrap();
        let reg = BoxRegularizer {
            region: BoxRegion::cube(2, -1.0, 1.0).unwrap(),
            weight: 1.0,
        };
        let p = LossPipeline::new(LossSpec::augment(vec![0]).unwrap().with_regularizer(reg));
        let e = p.evaluate(&x).unwrap();
        assert_eq!(e.reg_gradient.as_deref(), Some(&[2.0, 0.0, 0.0, 0.0][..]));
        assert!((e.loss - (e.topo_loss + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn stop_rules() {
        let mut s = StopState::new(StopRule::Ema { decay: 0.5, eps: 1.0 });
        assert_eq!(s.observe(3.0), None);
        assert_eq!(s.observe(0.0), None);
        assert_eq!(s.observe(0.0), Some(StopReason::Ema));
        let mut s = StopState::new(StopRule::Increase { delta: 3.0 });
        assert_eq!(s.observe(-1.0), None);
        assert_eq!(s.observe(-3.5), None);
        assert_eq!(s.observe(-4.0), Some(StopReason::Increase));
        assert!(StopRule::Ema { decay: 1.0, eps: 0.0 }.validate().is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = OptimConfig::default();
        assert!(cfg.validate(10).is_ok());
        assert!(OptimConfig { lr: 0.0, ..cfg.clone() }.validate(10).is_err());
        assert!(OptimConfig { subsample: Some(11), ..cfg.clone() }.validate(10).is_err());
        assert!(OptimConfig { epochs: 0, ..cfg.clone() }.validate(10).is_err());
        assert_eq!(OptimConfig { subsample: Some(3), ..cfg.clone() }.validation_reps(10), 4);
        assert_eq!(OptimConfig { subsample: Some(3), val_reps: Some(2), ..cfg }.validation_reps(10), 2);
    }
}

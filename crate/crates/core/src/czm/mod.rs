//! Inverse identification of cohesive-law parameters.
//!
//! A forward model maps `(T_c, Γ_c)` to the load at twelve fixed CMOD
//! abscissae. [`inverse_identify`] trains a surrogate on a handful of forward
//! runs, minimizes the surrogate mismatch against a target curve, verifies
//! the candidate with a real forward run and adds it to the training set
//! until the verified mismatch is within tolerance.

pub mod surrogate;

use std::fmt;
use std::path::PathBuf;

use log::{debug, info};
use thiserror::Error;

use crate::format::sig6;
use crate::jobs::{render_input, run_job_and_read, JobError, JobSpec};
use crate::optim::{nelder_mead, NelderMead};
use crate::records::{extract_nodal_field, RecordError, DISPLACEMENT_KEY, REACTION_FORCE_KEY};

pub use surrogate::{NetworkConfig, SurrogateKind, SurrogateModel};

pub const CURVE_POINTS: usize = 12;

#[derive(Debug, Error)]
pub enum CzmError {
    #[error("{name} must be positive, got {value}")]
    NonPositiveInput { name: &'static str, value: f64 },
    #[error("bad response curve: {0}")]
    BadCurve(String),
    #[error("need at least 3 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("duplicate training input {0}")]
    DuplicateInputs(TSLParams),
    #[error("surrogate system is singular")]
    SingularSystem,
    #[error("invalid parameter box: {0}")]
    InvalidBox(String),
    #[error("no convergence after {iterations} outer iterations (best mismatch {} at {best})", sig6(*best_mismatch))]
    NoConvergence {
        iterations: usize,
        best: TSLParams,
        best_mismatch: f64,
    },
    #[error("target is not reachable inside the box: best mismatch {} at {best}, best on a {grid}x{grid} forward grid {}", sig6(*best_mismatch), sig6(*reachable))]
    BoxTooSmall {
        best: TSLParams,
        best_mismatch: f64,
        reachable: f64,
        grid: usize,
    },
    #[error("forward model: {0}")]
    Forward(String),
    #[error(transparent)]
    Job(#[from] JobError),
    #[error(transparent)]
    Record(#[from] RecordError),
}

fn positive(name: &'static str, value: f64) -> Result<f64, CzmError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CzmError::NonPositiveInput { name, value })
    }
}

/// `Γ_c = T_c·δ_c / 2`.
pub fn cohesive_energy(tc: f64, delta_c: f64) -> Result<f64, CzmError> {
    positive("T_c", tc)?;
    if !(delta_c >= 0.0 && delta_c.is_finite()) {
        return Err(CzmError::NonPositiveInput {
            name: "delta_c",
            value: delta_c,
        });
    }
    Ok(0.5 * tc * delta_c)
}

/// `δ_c = 2·Γ_c / T_c`.
pub fn delta_from(tc: f64, gamma_c: f64) -> Result<f64, CzmError> {
    Ok(2.0 * positive("Gamma_c", gamma_c)? / positive("T_c", tc)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TSLParams {
    /// Cohesive strength (MPa).
    pub tc: f64,
    /// Cohesive energy (N/mm).
    pub gamma_c: f64,
}

impl TSLParams {
    pub fn new(tc: f64, gamma_c: f64) -> Result<Self, CzmError> {
        Ok(TSLParams {
            tc: positive("T_c", tc)?,
            gamma_c: positive("Gamma_c", gamma_c)?,
        })
    }

    /// Critical separation (mm).
    pub fn delta_c(&self) -> f64 {
        2.0 * self.gamma_c / self.tc
    }
}

impl fmt::Display for TSLParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(T_c = {}, Gamma_c = {})",
            sig6(self.tc),
            sig6(self.gamma_c)
        )
    }
}

/// Loads at fixed, strictly increasing CMOD abscissae.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseCurve {
    cmod: Vec<f64>,
    load: Vec<f64>,
}

impl ResponseCurve {
    pub fn new(cmod: Vec<f64>, load: Vec<f64>) -> Result<Self, CzmError> {
        if cmod.len() != CURVE_POINTS || load.len() != CURVE_POINTS {
            return Err(CzmError::BadCurve(format!(
                "expected {CURVE_POINTS} points, got {} CMOD and {} load values",
                cmod.len(),
                load.len()
            )));
        }
        if cmod
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
            || cmod.iter().any(|v| !v.is_finite())
        {
            return Err(CzmError::BadCurve(
                "CMOD must be strictly increasing".into(),
            ));
        }
        if load.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(CzmError::BadCurve(
                "loads must be finite and non-negative".into(),
            ));
        }
        Ok(ResponseCurve { cmod, load })
    }

    /// Resamples scattered `(cmod, load)` points onto `abscissae` by linear
    /// interpolation.
    pub fn resample(points: &[(f64, f64)], abscissae: &[f64]) -> Result<Self, CzmError> {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.len() < 2 || pts.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CzmError::BadCurve(
                "need at least two points with distinct CMOD".into(),
            ));
        }
        let (first, last) = (pts[0].0, pts[pts.len() - 1].0);
        let load = abscissae
            .iter()
            .map(|&v| {
                if v < first - 1e-12 * first.abs() || v > last + 1e-12 * last.abs() {
                    return Err(CzmError::BadCurve(format!(
                        "CMOD {v} outside data range [{first}, {last}]"
                    )));
                }
                let i = pts.partition_point(|p| p.0 < v).clamp(1, pts.len() - 1);
                let (a, b) = (pts[i - 1], pts[i]);
                Ok(a.1 + (v - a.0) / (b.0 - a.0) * (b.1 - a.1))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ResponseCurve::new(abscissae.to_vec(), load)
    }

    /// Comma-separated `cmod,load` rows; blank lines, `#` comments and a
    /// non-numeric header line are skipped.
    pub fn from_csv(text: &str, abscissae: &[f64]) -> Result<Self, CzmError> {
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
                return Err(CzmError::BadCurve(format!(
                    "line {}: expected cmod,load",
                    n + 1
                )));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => points.push((x, y)),
                _ if points.is_empty() && n == 0 => continue,
                _ => return Err(CzmError::BadCurve(format!("line {}: not numeric", n + 1))),
            }
        }
        ResponseCurve::resample(&points, abscissae)
    }

    pub fn cmod(&self) -> &[f64] {
        &self.cmod
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn peak_load(&self) -> f64 {
        self.load.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cmod,load\n");
        for (v, p) in self.cmod.iter().zip(&self.load) {
            out.push_str(&format!("{},{}\n", sig6(*v), sig6(*p)));
        }
        out
    }
}

/// RMS load difference normalized by the target peak load.
pub fn mismatch(prediction: &[f64], target: &ResponseCurve) -> f64 {
    let n = target.load.len() as f64;
    let sum: f64 = prediction
        .iter()
        .zip(&target.load)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    (sum / n).sqrt() / target.peak_load().max(f64::MIN_POSITIVE)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardConfig {
    /// Peak-load coefficient.
    pub alpha: f64,
    /// Peak-CMOD coefficient.
    pub beta: f64,
    /// CMOD window `[first, last]` (mm) of the twelve abscissae.
    pub window: [f64; 2],
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            alpha: 25.0,
            beta: 1.0,
            window: [0.05, 0.6],
        }
    }
}

impl ForwardConfig {
    pub fn abscissae(&self) -> Vec<f64> {
        let [a, b] = self.window;
        (0..CURVE_POINTS)
            .map(|i| a + (b - a) * i as f64 / (CURVE_POINTS - 1) as f64)
            .collect()
    }
}

/// Closed-form load–CMOD response `P(v) = P_pk·(v/v_pk)·exp(1 − v/v_pk)`
/// with `P_pk = α·T_c^0.8·Γ_c^0.2` and `v_pk = β·Γ_c/T_c`.
pub fn forward_model(params: &TSLParams, config: &ForwardConfig) -> ResponseCurve {
    let p_pk = config.alpha * params.tc.powf(0.8) * params.gamma_c.powf(0.2);
    let v_pk = config.beta * params.gamma_c / params.tc;
    let cmod = config.abscissae();
    let load = cmod
        .iter()
        .map(|&v| {
            let r = v / v_pk;
            p_pk * r * (1.0 - r).exp()
        })
        .collect();
    ResponseCurve { cmod, load }
}

/// Produces the response curve for a parameter pair.
pub trait ForwardModel {
    fn evaluate(&mut self, params: &TSLParams) -> Result<ResponseCurve, CzmError>;
    fn abscissae(&self) -> Vec<f64>;
}

#[derive(Clone, Debug, Default)]
pub struct SyntheticModel {
    pub config: ForwardConfig,
}

impl ForwardModel for SyntheticModel {
    fn evaluate(&mut self, params: &TSLParams) -> Result<ResponseCurve, CzmError> {
        Ok(forward_model(params, &self.config))
    }

    fn abscissae(&self) -> Vec<f64> {
        self.config.abscissae()
    }
}

/// Forward runs as external jobs. The deck template has lines containing
/// `@TC@` and `@GC@`; the results file carries one displacement record for
/// `cmod_node` (first component = CMOD) and one reaction-force record for
/// `load_node` (first component = load) per increment.
#[derive(Clone, Debug)]
pub struct ExternalModel {
    pub job: JobSpec,
    pub template: String,
    pub cmod_node: i64,
    pub load_node: i64,
    pub abscissae: Vec<f64>,
}

impl ExternalModel {
    pub fn deck_path(&self) -> PathBuf {
        self.job.workdir.join(format!("{}.inp", self.job.job_name))
    }
}

impl ForwardModel for ExternalModel {
    fn evaluate(&mut self, params: &TSLParams) -> Result<ResponseCurve, CzmError> {
        let tc = format!("TC={:e}", params.tc);
        let gc = format!("GC={:e}", params.gamma_c);
        let deck = render_input(&self.template, &[("@TC@", &tc), ("@GC@", &gc)])?;
        std::fs::write(self.deck_path(), deck).map_err(JobError::from)?;
        let stream = run_job_and_read(&self.job)?;
        let cmod = extract_nodal_field(&stream, DISPLACEMENT_KEY)?;
        let load = extract_nodal_field(&stream, REACTION_FORCE_KEY)?;
        let first = |rows: &[crate::records::NodalRow], node: i64| -> Vec<f64> {
            rows.iter()
                .filter(|r| r.node_id == node)
                .filter_map(|r| r.components.first().copied())
                .collect()
        };
        let v = first(&cmod.rows, self.cmod_node);
        let p = first(&load.rows, self.load_node);
        if v.len() != p.len() || v.is_empty() {
            return Err(CzmError::Forward(format!(
                "{} CMOD values but {} loads in results",
                v.len(),
                p.len()
            )));
        }
        let points: Vec<(f64, f64)> = v.into_iter().zip(p.into_iter().map(f64::abs)).collect();
        ResponseCurve::resample(&points, &self.abscissae)
    }

    fn abscissae(&self) -> Vec<f64> {
        self.abscissae.clone()
    }
}

/// Deck understood by [`solve_deck`]; `@TC@` and `@GC@` mark the lines
/// rewritten per forward run.
pub fn deck_template() -> String {
    "** cohesive specimen\n\
     *PARAMETER\n\
     ** cohesive strength @TC@\n\
     ** cohesive energy @GC@\n\
     *STEP\n\
     *STATIC\n\
     *END STEP\n\
     *FILE FORMAT, ASCII\n"
        .to_string()
}

fn deck_value(deck: &str, key: &str) -> Result<f64, CzmError> {
    deck.lines()
        .filter_map(|l| l.trim().split_once('='))
        .find(|(k, _)| k.trim().eq_ignore_ascii_case(key))
        .ok_or_else(|| CzmError::Forward(format!("deck has no {key}= line")))?
        .1
        .trim()
        .parse()
        .map_err(|e| CzmError::Forward(format!("{key}: {e}")))
}

/// Evaluates [`forward_model`] for a rendered deck and returns a results
/// file with, per increment, a displacement record for node 1 (CMOD) and a
/// reaction-force record for node 2 (load).
pub fn solve_deck(deck: &str, config: &ForwardConfig) -> Result<String, CzmError> {
    use crate::codec::{encode_stream, DataItem, FilStream, LogicalRecord};
    let params = TSLParams::new(deck_value(deck, "TC")?, deck_value(deck, "GC")?)?;
    let curve = forward_model(&params, config);
    let mut records = Vec::new();
    for (v, p) in curve.cmod().iter().zip(curve.load()) {
        for (key, node, value) in [(DISPLACEMENT_KEY, 1, *v), (REACTION_FORCE_KEY, 2, *p)] {
            let attrs = vec![
                DataItem::Int(node),
                DataItem::Float(value),
                DataItem::Float(0.0),
            ];
            records.push(LogicalRecord::new(key, attrs).expect("non-negative key"));
        }
    }
    Ok(encode_stream(&FilStream::new(records)))
}

#[derive(Clone, Debug)]
pub struct InverseOptions {
    /// `[[T_min, T_max], [Γ_min, Γ_max]]`.
    pub bounds: [[f64; 2]; 2],
    pub n_init: usize,
    /// Verified mismatch at which the loop stops.
    pub tol: f64,
    pub max_outer: usize,
    pub kind: SurrogateKind,
    pub network: NetworkConfig,
    /// Extra random initial points beyond the corner-plus-center design.
    pub seed: u64,
    /// Forward grid resolution of the reachability check.
    pub reach_grid: usize,
}

impl Default for InverseOptions {
    fn default() -> Self {
        InverseOptions {
            bounds: [[100.0, 300.0], [20.0, 100.0]],
            n_init: 5,
            tol: 0.01,
            max_outer: 10,
            kind: SurrogateKind::Interpolant,
            network: NetworkConfig::default(),
            seed: 42,
            reach_grid: 9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InverseStep {
    pub iteration: usize,
    pub params: TSLParams,
    /// Mismatch predicted by the surrogate at `params`.
    pub predicted: f64,
    /// Mismatch of the forward run at `params`.
    pub verified: f64,
    /// Lowest verified mismatch so far, initial samples included.
    pub best: f64,
    pub training_size: usize,
}

#[derive(Clone, Debug)]
pub struct InverseResult {
    pub params: TSLParams,
    pub mismatch: f64,
    pub iterations: usize,
    pub history: Vec<InverseStep>,
    /// Whether each parameter sits on a face of the box.
    pub at_boundary: [bool; 2],
    pub surrogate: SurrogateModel,
}

impl InverseResult {
    pub fn on_boundary(&self) -> bool {
        self.at_boundary[0] || self.at_boundary[1]
    }

    /// `key = value` summary followed by the history table.
    pub fn report(&self) -> String {
        let mut out = format!(
            "T_c = {}\nGamma_c = {}\ndelta_c = {}\niterations = {}\nmismatch = {}\nat_boundary = {}\n\niteration,T_c,Gamma_c,predicted,verified,best,training_size\n",
            sig6(self.params.tc),
            sig6(self.params.gamma_c),
            sig6(self.params.delta_c()),
            self.iterations,
            sig6(self.mismatch),
            self.on_boundary()
        );
        for s in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.iteration,
                sig6(s.params.tc),
                sig6(s.params.gamma_c),
                sig6(s.predicted),
                sig6(s.verified),
                sig6(s.best),
                s.training_size
            ));
        }
        out
    }
}

fn validate_box(b: &[[f64; 2]; 2]) -> Result<(), CzmError> {
    for (name, [lo, hi]) in [("T_c", b[0]), ("Gamma_c", b[1])] {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(CzmError::InvalidBox(format!("{name} range [{lo}, {hi}]")));
        }
    }
    Ok(())
}

fn denormalize(u: [f64; 2], b: &[[f64; 2]; 2]) -> TSLParams {
    TSLParams {
        tc: b[0][0] + u[0] * (b[0][1] - b[0][0]),
        gamma_c: b[1][0] + u[1] * (b[1][1] - b[1][0]),
    }
}

/// Corners and center of the box, then seeded uniform points.
pub fn initial_design(bounds: &[[f64; 2]; 2], n: usize, seed: u64) -> Vec<TSLParams> {
    use rand::{Rng, SeedableRng};
    let mut unit = vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.5, 0.5]];
    if n < unit.len() {
        // keep the center first for tiny designs
        unit.rotate_right(1);
        unit.truncate(n);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    while unit.len() < n {
        unit.push([rng.gen::<f64>(), rng.gen::<f64>()]);
    }
    unit.into_iter().map(|u| denormalize(u, bounds)).collect()
}

/// Minimizes the surrogate mismatch over the unit square from a 4×4 grid
/// and every training point.
fn minimize_surrogate(
    model: &SurrogateModel,
    target: &ResponseCurve,
    bounds: &[[f64; 2]; 2],
) -> ([f64; 2], f64) {
    let to_model = |u: [f64; 2]| {
        let p = denormalize(u, bounds);
        [
            (p.tc - model.ranges[0][0]) / (model.ranges[0][1] - model.ranges[0][0]),
            (p.gamma_c - model.ranges[1][0]) / (model.ranges[1][1] - model.ranges[1][0]),
        ]
    };
    let objective = |x: &[f64]| mismatch(&model.predict_normalized(to_model([x[0], x[1]])), target);
    let mut starts: Vec<[f64; 2]> = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            starts.push([(i as f64 + 0.5) / 4.0, (j as f64 + 0.5) / 4.0]);
        }
    }
    for p in &model.inputs {
        starts.push([
            ((p.tc - bounds[0][0]) / (bounds[0][1] - bounds[0][0])).clamp(0.0, 1.0),
            ((p.gamma_c - bounds[1][0]) / (bounds[1][1] - bounds[1][0])).clamp(0.0, 1.0),
        ]);
    }
    let opts = NelderMead {
        max_evals: 600,
        x_tol: 1e-10,
        f_tol: 0.0,
        initial_step: 0.05,
        restarts: 1,
    };
    let mut best = ([0.5, 0.5], f64::INFINITY);
    for s in starts {
        let m = nelder_mead(objective, &s, &[0.0, 0.0], &[1.0, 1.0], &opts);
        if m.value < best.1 {
            best = ([m.x[0], m.x[1]], m.value);
        }
    }
    best
}

/// Best mismatch over a `grid × grid` forward sweep of the box.
fn reachable_mismatch<F: ForwardModel>(
    forward: &mut F,
    target: &ResponseCurve,
    bounds: &[[f64; 2]; 2],
    grid: usize,
) -> Result<f64, CzmError> {
    let grid = grid.max(2);
    let mut best = f64::INFINITY;
    for i in 0..grid {
        for j in 0..grid {
            let u = [i as f64 / (grid - 1) as f64, j as f64 / (grid - 1) as f64];
            let curve = forward.evaluate(&denormalize(u, bounds))?;
            best = best.min(mismatch(curve.load(), target));
        }
    }
    Ok(best)
}

/// Surrogate-assisted identification of `(T_c, Γ_c)` for a target curve.
///
/// Returns [`CzmError::BoxTooSmall`] when the loop stalls or runs out of
/// iterations and a forward sweep of the box shows nothing closer than the
/// tolerance, and [`CzmError::NoConvergence`] when the target is reachable
/// but was not matched in `max_outer` iterations.
pub fn inverse_identify<F: ForwardModel>(
    target: &ResponseCurve,
    forward: &mut F,
    opts: &InverseOptions,
) -> Result<InverseResult, CzmError> {
    validate_box(&opts.bounds)?;
    let abscissae = forward.abscissae();
    if target.cmod().len() != abscissae.len()
        || target
            .cmod()
            .iter()
            .zip(&abscissae)
            .any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1.0))
    {
        return Err(CzmError::BadCurve(
            "target abscissae differ from the forward model".into(),
        ));
    }
    if opts.n_init < 3 {
        return Err(CzmError::TooFewSamples(opts.n_init));
    }

    let mut training: Vec<(TSLParams, Vec<f64>)> = Vec::new();
    let mut best = (
        TSLParams {
            tc: 1.0,
            gamma_c: 1.0,
        },
        f64::INFINITY,
    );
    for p in initial_design(&opts.bounds, opts.n_init, opts.seed) {
        let curve = forward.evaluate(&p)?;
        let m = mismatch(curve.load(), target);
        if m < best.1 {
            best = (p, m);
        }
        training.push((p, curve.load().to_vec()));
    }
    debug!("initial design best {} mismatch {:e}", best.0, best.1);

    let mut history = Vec::new();
    let mut stalled = 0;
    for iteration in 1..=opts.max_outer {
        let model = SurrogateModel::train(&training, opts.kind, Some(opts.bounds), &opts.network)?;
        let (u, predicted) = minimize_surrogate(&model, target, &opts.bounds);
        let candidate = denormalize(u, &opts.bounds);
        let curve = forward.evaluate(&candidate)?;
        let verified = mismatch(curve.load(), target);
        let previous_best = best.1;
        if verified < best.1 {
            best = (candidate, verified);
        }
        history.push(InverseStep {
            iteration,
            params: candidate,
            predicted,
            verified,
            best: best.1,
            training_size: training.len(),
        });
        info!(
            "outer iteration {iteration}: {candidate} predicted {:e} verified {verified:e}",
            predicted
        );

        if verified <= opts.tol {
            let at_boundary = [
                u[0] <= 1e-6 || u[0] >= 1.0 - 1e-6,
                u[1] <= 1e-6 || u[1] >= 1.0 - 1e-6,
            ];
            return Ok(InverseResult {
                params: candidate,
                mismatch: verified,
                iterations: iteration,
                history,
                at_boundary,
                surrogate: model,
            });
        }

        let duplicate = training.iter().any(|(p, _)| {
            ((p.tc - candidate.tc) / (opts.bounds[0][1] - opts.bounds[0][0])).abs() < 1e-10
                && ((p.gamma_c - candidate.gamma_c) / (opts.bounds[1][1] - opts.bounds[1][0])).abs()
                    < 1e-10
        });
        stalled = if best.1 < previous_best * (1.0 - 1e-3) {
            0
        } else {
            stalled + 1
        };
        if duplicate || stalled >= 3 {
            break;
        }
        training.push((candidate, curve.load().to_vec()));
    }

    let reachable = reachable_mismatch(forward, target, &opts.bounds, opts.reach_grid)?;
    if reachable > opts.tol && best.1 > opts.tol {
        return Err(CzmError::BoxTooSmall {
            best: best.0,
            best_mismatch: best.1,
            reachable,
            grid: opts.reach_grid,
        });
    }
    Err(CzmError::NoConvergence {
        iterations: history.len(),
        best: best.0,
        best_mismatch: best.1,
    })
}

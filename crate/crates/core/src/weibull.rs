//! Three-parameter Weibull weakest-link model for cleavage fracture.
//!
//! The Weibull stress aggregates element principal stresses above a
//! threshold `sigma_th`:
//!
//! ```text
//! sigma_w = sigma_th + [ sum_i max(s1_i - sigma_th, 0)^m * V_i / V0 ]^(1/m)
//! P_f     = 1 - exp(-((sigma_w - sigma_th) / sigma_u)^m)
//! ```
//!
//! [`fit_three_parameter`] calibrates `(sigma_th, m, sigma_u)` against ranked
//! failure loads by alternating between evaluating `sigma_w` at the failure
//! loads and a least-squares fit of the failure-probability law to the
//! median-rank estimates `(j - 0.3) / (n + 0.4)`.

use std::collections::BTreeMap;
use std::io::BufRead;

use log::debug;
use nalgebra::{Matrix3, SymmetricEigen};
use thiserror::Error;

use crate::optim::{nelder_mead, NelderMead};
use crate::records::{ElementTable, NodeTable, StressTable};

/// Lower clamp for `log10(P_f)` in hazard maps.
pub const LOG10_FLOOR: f64 = -16.0;

#[derive(Debug, Error)]
pub enum WeibullError {
    #[error("invalid Weibull parameters: {0}")]
    InvalidParams(String),
    #[error("invalid element field: {0}")]
    InvalidField(String),
    #[error("stress tensor needs 4 or 6 components, got {0}")]
    BadComponentCount(usize),
    #[error("Weibull stress {sigma_w} is below the threshold {sigma_th}")]
    DomainError { sigma_w: f64, sigma_th: f64 },
    #[error("rank {rank} outside 1..={count}")]
    RankOutOfRange { rank: usize, count: usize },
    #[error("need at least 3 failure samples, got {0}")]
    TooFewSamples(usize),
    #[error("failure load {load} outside the field load range [{min}, {max}]")]
    OutOfFieldRange { load: f64, min: f64, max: f64 },
    #[error("only {distinct} distinct Weibull stresses for 3 parameters")]
    DegenerateFit { distinct: usize },
    #[error(
        "calibration did not converge in {iterations} iterations (last change {last_change:e})"
    )]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `(sigma_th, m, sigma_u, V0)`; stresses in MPa, volumes in mm³.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeibullParams {
    pub sigma_th: f64,
    pub m: f64,
    pub sigma_u: f64,
    pub v0: f64,
}

impl WeibullParams {
    pub fn new(sigma_th: f64, m: f64, sigma_u: f64, v0: f64) -> Result<Self, WeibullError> {
        let p = WeibullParams {
            sigma_th,
            m,
            sigma_u,
            v0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), WeibullError> {
        let ok = self.m > 0.0
            && self.sigma_u > 0.0
            && self.sigma_th >= 0.0
            && self.v0 > 0.0
            && [self.sigma_th, self.m, self.sigma_u, self.v0]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(WeibullError::InvalidParams(format!("{self:?}")))
        }
    }
}

/// Per-element maximum principal stress and volume at one load level.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementField {
    /// Load measure (J-integral, N/mm).
    pub load_level: f64,
    pub element_ids: Vec<i64>,
    pub sigma1: Vec<f64>,
    pub volume: Vec<f64>,
}

impl ElementField {
    /// Element ids default to `1..=n`.
    pub fn new(load_level: f64, sigma1: Vec<f64>, volume: Vec<f64>) -> Result<Self, WeibullError> {
        let ids = (1..=sigma1.len() as i64).collect();
        ElementField::with_ids(load_level, ids, sigma1, volume)
    }

    pub fn with_ids(
        load_level: f64,
        element_ids: Vec<i64>,
        sigma1: Vec<f64>,
        volume: Vec<f64>,
    ) -> Result<Self, WeibullError> {
        if sigma1.is_empty() {
            return Err(WeibullError::InvalidField("no elements".into()));
        }
        if sigma1.len() != volume.len() || element_ids.len() != sigma1.len() {
            return Err(WeibullError::InvalidField(format!(
                "{} ids, {} stresses, {} volumes",
                element_ids.len(),
                sigma1.len(),
                volume.len()
            )));
        }
        if let Some(v) = volume.iter().find(|v| v.is_nan() || **v <= 0.0) {
            return Err(WeibullError::InvalidField(format!(
                "non-positive volume {v}"
            )));
        }
        Ok(ElementField {
            load_level,
            element_ids,
            sigma1,
            volume,
        })
    }

    pub fn len(&self) -> usize {
        self.sigma1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma1.is_empty()
    }
}

/// One experimental failure with its rank among `count` tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FailureSample {
    pub failure_load: f64,
    pub rank: usize,
    pub count: usize,
}

/// Sorts failure loads ascending and assigns ranks `1..=n`.
pub fn rank_failure_loads(loads: &[f64]) -> Vec<FailureSample> {
    let mut sorted = loads.to_vec();
    sorted.sort_by(f64::total_cmp);
    let count = sorted.len();
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, failure_load)| FailureSample {
            failure_load,
            rank: i + 1,
            count,
        })
        .collect()
}

/// Largest eigenvalue of a symmetric stress tensor given as
/// `[S11, S22, S33, S12]` or `[S11, S22, S33, S12, S13, S23]`.
pub fn max_principal_stress(components: &[f64]) -> Result<f64, WeibullError> {
    let (s13, s23) = match components.len() {
        4 => (0.0, 0.0),
        6 => (components[4], components[5]),
        n => return Err(WeibullError::BadComponentCount(n)),
    };
    let [s11, s22, s33, s12] = [components[0], components[1], components[2], components[3]];
    let tensor = Matrix3::new(s11, s12, s13, s12, s22, s23, s13, s23, s33);
    let eig = SymmetricEigen::new(tensor);
    Ok(eig.eigenvalues.max())
}

fn aggregate(sum: f64, params: &WeibullParams) -> f64 {
    if sum > 0.0 {
        params.sigma_th + sum.powf(1.0 / params.m)
    } else {
        params.sigma_th
    }
}

fn element_term(sigma1: f64, volume: f64, params: &WeibullParams) -> f64 {
    let excess = sigma1 - params.sigma_th;
    if excess > 0.0 {
        excess.powf(params.m) * (volume / params.v0)
    } else {
        0.0
    }
}

/// Weibull stress of a field; elements at or below the threshold contribute
/// nothing.
pub fn weibull_stress(field: &ElementField, params: &WeibullParams) -> f64 {
    let sum: f64 = field
        .sigma1
        .iter()
        .zip(&field.volume)
        .map(|(&s, &v)| element_term(s, v, params))
        .sum();
    aggregate(sum, params)
}

/// Cumulative failure probability for a Weibull stress.
pub fn failure_probability(sigma_w: f64, params: &WeibullParams) -> Result<f64, WeibullError> {
    if sigma_w.is_nan() || sigma_w < params.sigma_th {
        return Err(WeibullError::DomainError {
            sigma_w,
            sigma_th: params.sigma_th,
        });
    }
    let x = ((sigma_w - params.sigma_th) / params.sigma_u).powf(params.m);
    Ok(-(-x).exp_m1())
}

/// Median-rank estimate `(j - 0.3) / (n + 0.4)`.
pub fn empirical_cdf(rank: usize, count: usize) -> Result<f64, WeibullError> {
    if rank < 1 || rank > count {
        return Err(WeibullError::RankOutOfRange { rank, count });
    }
    Ok((rank as f64 - 0.3) / (count as f64 + 0.4))
}

/// Per-element local failure probability.
#[derive(Clone, Debug, PartialEq)]
pub struct HazardMap {
    pub element_ids: Vec<i64>,
    pub probability: Vec<f64>,
    /// `log10(P_f)` clamped below at [`LOG10_FLOOR`].
    pub log10_probability: Vec<f64>,
}

pub fn hazard_map(field: &ElementField, params: &WeibullParams) -> HazardMap {
    let probability: Vec<f64> = field
        .sigma1
        .iter()
        .zip(&field.volume)
        .map(|(&s, &v)| {
            let local = aggregate(element_term(s, v, params), params);
            failure_probability(local, params).expect("local Weibull stress is >= threshold")
        })
        .collect();
    let log10_probability = probability
        .iter()
        .map(|&p| {
            if p > 0.0 {
                p.log10().max(LOG10_FLOOR)
            } else {
                LOG10_FLOOR
            }
        })
        .collect();
    HazardMap {
        element_ids: field.element_ids.clone(),
        probability,
        log10_probability,
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Relative parameter-change tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Hold `sigma_th` at this value and fit `(m, sigma_u)` only.
    pub fixed_threshold: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-4,
            max_iter: 100,
            fixed_threshold: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitIteration {
    pub params: WeibullParams,
    /// Sum of squared probability residuals at the fitted parameters.
    pub residual: f64,
    /// Relative change from the previous iterate.
    pub change: f64,
}

#[derive(Clone, Debug)]
pub struct WeibullFit {
    pub params: WeibullParams,
    pub trace: Vec<FitIteration>,
    /// Weibull stress at each sample's failure load (sample order).
    pub sigma_w: Vec<f64>,
}

/// Failure samples located on the sorted load levels: each sample's Weibull
/// stress is interpolated linearly between its two bracketing levels.
struct Calibration<'a> {
    levels: Vec<&'a ElementField>,
    /// `(lower level index, weight of the upper level)` per sample.
    brackets: Vec<(usize, f64)>,
    target: Vec<f64>,
    v0: f64,
}

impl<'a> Calibration<'a> {
    fn new(
        fields: &'a [ElementField],
        samples: &[FailureSample],
        v0: f64,
    ) -> Result<Self, WeibullError> {
        let mut levels: Vec<&ElementField> = fields.iter().collect();
        levels.sort_by(|a, b| a.load_level.total_cmp(&b.load_level));
        levels.dedup_by(|a, b| a.load_level == b.load_level);
        if levels.len() < 2 {
            return Err(WeibullError::InvalidField(
                "need at least two distinct load levels".into(),
            ));
        }
        let loads: Vec<f64> = levels.iter().map(|f| f.load_level).collect();
        let (lo, hi) = (loads[0], loads[loads.len() - 1]);
        let mut brackets = Vec::with_capacity(samples.len());
        for s in samples {
            let load = s.failure_load;
            if !(load >= lo && load <= hi) {
                return Err(WeibullError::OutOfFieldRange {
                    load,
                    min: lo,
                    max: hi,
                });
            }
            let i = loads
                .partition_point(|&l| l < load)
                .clamp(1, loads.len() - 1);
            let t = (load - loads[i - 1]) / (loads[i] - loads[i - 1]);
            brackets.push((i - 1, t));
        }
        let target = samples
            .iter()
            .map(|s| empirical_cdf(s.rank, s.count))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Calibration {
            levels,
            brackets,
            target,
            v0,
        })
    }

    fn sigma_w(&self, sigma_th: f64, m: f64) -> Vec<f64> {
        let p = WeibullParams {
            sigma_th,
            m,
            sigma_u: 1.0,
            v0: self.v0,
        };
        let mut cache: Vec<Option<f64>> = vec![None; self.levels.len()];
        let mut at = |i: usize| *cache[i].get_or_insert_with(|| weibull_stress(self.levels[i], &p));
        self.brackets
            .iter()
            .map(|&(i, t)| {
                let (a, b) = (at(i), at(i + 1));
                a + t * (b - a)
            })
            .collect()
    }

    fn residual(&self, p: &WeibullParams) -> f64 {
        sum_squared_residuals(&self.sigma_w(p.sigma_th, p.m), &self.target, p)
    }

    /// Largest element stress at the highest failure load; above it every
    /// sample has zero failure probability.
    fn threshold_ceiling(&self) -> f64 {
        let top = self.brackets.iter().map(|b| b.0 + 1).max().unwrap_or(0);
        self.levels[top]
            .sigma1
            .iter()
            .copied()
            .fold(0.0f64, f64::max)
    }

    /// `sigma_u` from the Weibull plot with the slope pinned to `m`.
    fn scale_for(&self, sigma_w: &[f64], sigma_th: f64, m: f64) -> Option<f64> {
        let (mut n, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for (&s, &p) in sigma_w.iter().zip(&self.target) {
            if s > sigma_th {
                n += 1.0;
                sx += (s - sigma_th).ln();
                sy += (-(-p).ln_1p()).ln();
            }
        }
        if n < 1.0 {
            return None;
        }
        let u = ((sx - sy / m) / n).exp();
        (u.is_finite() && u > 0.0).then_some(u)
    }

    /// Grid over `(sigma_th, m)` with `sigma_u` from the Weibull plot.
    fn profile_seed(&self, fixed: Option<f64>) -> Option<(WeibullParams, f64)> {
        let ceiling = self.threshold_ceiling();
        let thresholds: Vec<f64> = match fixed {
            Some(t) => vec![t],
            None => (0..PROFILE_THRESHOLDS)
                .map(|k| ceiling * k as f64 / PROFILE_THRESHOLDS as f64)
                .collect(),
        };
        let mut best: Option<(WeibullParams, f64)> = None;
        for &sigma_th in &thresholds {
            for j in 0..PROFILE_MODULI {
                // geometric grid over [0.5, 50]
                let m = 0.5 * 100f64.powf(j as f64 / (PROFILE_MODULI - 1) as f64);
                let s = self.sigma_w(sigma_th, m);
                let Some(sigma_u) = self.scale_for(&s, sigma_th, m) else {
                    continue;
                };
                let p = WeibullParams {
                    sigma_th,
                    m,
                    sigma_u,
                    v0: self.v0,
                };
                let value = sum_squared_residuals(&s, &self.target, &p);
                if best.as_ref().is_none_or(|b| value < b.1) {
                    best = Some((p, value));
                }
            }
        }
        best
    }

    /// Joint least-squares fit of `(sigma_th, m, sigma_u)` with the Weibull
    /// stresses recomputed for every candidate, searched locally from `start`.
    fn fit(&self, start: &WeibullParams, fixed: Option<f64>) -> (WeibullParams, f64) {
        let ceiling = self.threshold_ceiling();
        let s = self.sigma_w(start.sigma_th, start.m);
        let scale = s
            .iter()
            .copied()
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let (u_lo, u_hi) = (1e-6 * scale, 1e3 * scale);
        let v0 = self.v0;
        let opts = NelderMead {
            max_evals: 3000,
            x_tol: 1e-12,
            f_tol: 0.0,
            initial_step: 0.02,
            restarts: 3,
        };
        let m0 = start.m.clamp(0.5, 50.0);
        let lnu0 = start.sigma_u.clamp(u_lo, u_hi).ln();
        match fixed {
            Some(sigma_th) => {
                let unpack = |x: &[f64]| WeibullParams {
                    sigma_th,
                    m: x[0],
                    sigma_u: x[1].exp(),
                    v0,
                };
                let best = nelder_mead(
                    |x| self.residual(&unpack(x)),
                    &[m0, lnu0],
                    &[0.5, u_lo.ln()],
                    &[50.0, u_hi.ln()],
                    &opts,
                );
                (unpack(&best.x), best.value)
            }
            None => {
                let unpack = |x: &[f64]| WeibullParams {
                    sigma_th: x[0],
                    m: x[1],
                    sigma_u: x[2].exp(),
                    v0,
                };
                let best = nelder_mead(
                    |x| self.residual(&unpack(x)),
                    &[start.sigma_th.clamp(0.0, ceiling), m0, lnu0],
                    &[0.0, 0.5, u_lo.ln()],
                    &[ceiling, 50.0, u_hi.ln()],
                    &opts,
                );
                (unpack(&best.x), best.value)
            }
        }
    }
}

const PROFILE_THRESHOLDS: usize = 24;
const PROFILE_MODULI: usize = 16;

fn sum_squared_residuals(sigma_w: &[f64], target: &[f64], params: &WeibullParams) -> f64 {
    sigma_w
        .iter()
        .zip(target)
        .map(|(&s, &p)| {
            let model = if s > params.sigma_th {
                failure_probability(s, params).unwrap_or(0.0)
            } else {
                0.0
            };
            (model - p).powi(2)
        })
        .sum()
}

fn distinct_count(values: &[f64]) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let scale = sorted.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut n = 0;
    let mut last = f64::NAN;
    for v in sorted {
        if !(v - last).abs().le(&(1e-12 * scale)) {
            n += 1;
            last = v;
        }
    }
    n
}

fn relative_change(old: &WeibullParams, new: &WeibullParams) -> f64 {
    [
        (old.sigma_th, new.sigma_th),
        (old.m, new.m),
        (old.sigma_u, new.sigma_u),
    ]
    .iter()
    .map(|(a, b)| ((b - a) / b.abs().max(1.0)).powi(2))
    .sum::<f64>()
    .sqrt()
}

/// Iterative three-parameter calibration against ranked failure loads.
///
/// Each iteration evaluates the Weibull stress at every failure load with
/// the current `(sigma_th, m)`, then refits `(sigma_th, m, sigma_u)` by least
/// squares against the median ranks, recomputing the Weibull stresses for
/// every candidate. The loop starts from `sigma_th = 0`, `m = 2` and
/// `sigma_u` = standard deviation of the initial Weibull stresses; the first
/// refit also considers a profile grid over `(sigma_th, m)`. It stops once
/// the relative parameter change drops below `opts.tol`.
pub fn fit_three_parameter(
    fields: &[ElementField],
    samples: &[FailureSample],
    v0: f64,
    opts: &FitOptions,
) -> Result<WeibullFit, WeibullError> {
    if samples.len() < 3 {
        return Err(WeibullError::TooFewSamples(samples.len()));
    }
    if v0.is_nan() || v0 <= 0.0 {
        return Err(WeibullError::InvalidParams(format!("V0 = {v0}")));
    }
    let cal = Calibration::new(fields, samples, v0)?;

    let sigma_th0 = match opts.fixed_threshold {
        Some(t) if !(t >= 0.0 && t.is_finite()) => {
            return Err(WeibullError::InvalidParams(format!("sigma_th = {t}")))
        }
        Some(t) => t,
        None => 0.0,
    };
    let initial = cal.sigma_w(sigma_th0, 2.0);
    let mean = initial.iter().sum::<f64>() / initial.len() as f64;
    let var = initial.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (initial.len() - 1) as f64;
    let mut params = WeibullParams {
        sigma_th: sigma_th0,
        m: 2.0,
        sigma_u: var.sqrt().max(f64::MIN_POSITIVE),
        v0,
    };

    let mut trace = Vec::new();
    let mut last_change = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let sigma_w = cal.sigma_w(params.sigma_th, params.m);
        let distinct = distinct_count(&sigma_w);
        if distinct < 3 {
            return Err(WeibullError::DegenerateFit { distinct });
        }
        let mut start = params;
        if trace.is_empty() {
            if let Some((seed, value)) = cal.profile_seed(opts.fixed_threshold) {
                if value < cal.residual(&params) {
                    start = seed;
                }
            }
        }
        let (next, residual) = cal.fit(&start, opts.fixed_threshold);
        last_change = relative_change(&params, &next);
        debug!(
            "weibull fit iteration {}: {next:?} residual {residual:e} change {last_change:e}",
            trace.len() + 1
        );
        params = next;
        trace.push(FitIteration {
            params,
            residual,
            change: last_change,
        });
        if last_change < opts.tol {
            return Ok(WeibullFit {
                params,
                trace,
                sigma_w: cal.sigma_w(params.sigma_th, params.m),
            });
        }
    }
    Err(WeibullError::NoConvergence {
        iterations: opts.max_iter,
        last_change,
    })
}

fn tet_volume(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let w = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
    (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0]))
        .abs()
        / 6.0
}

/// Area (2D, unit thickness) or volume (3D) of an element from its corner
/// nodes. Quadratic elements use their leading corner nodes.
pub fn element_measure(coords: &[Vec<f64>]) -> Result<f64, WeibullError> {
    let dim = coords.first().map_or(0, Vec::len);
    let n = coords.len();
    match (dim, n) {
        (2, 3 | 4 | 6 | 8 | 9) => {
            let corners = if n == 3 || n == 6 { 3 } else { 4 };
            let mut twice = 0.0;
            for i in 0..corners {
                let (a, b) = (&coords[i], &coords[(i + 1) % corners]);
                twice += a[0] * b[1] - b[0] * a[1];
            }
            Ok(0.5 * twice.abs())
        }
        (3, 4 | 10) => Ok(tet_volume(&coords[0], &coords[1], &coords[2], &coords[3])),
        (3, 8 | 20 | 27) => {
            // six tetrahedra sharing the 0-6 diagonal
            let c = |i: usize| coords[i].as_slice();
            let tets = [
                [0, 1, 2, 6],
                [0, 2, 3, 6],
                [0, 3, 7, 6],
                [0, 7, 4, 6],
                [0, 4, 5, 6],
                [0, 5, 1, 6],
            ];
            Ok(tets
                .iter()
                .map(|t| tet_volume(c(t[0]), c(t[1]), c(t[2]), c(t[3])))
                .sum())
        }
        _ => Err(WeibullError::InvalidField(format!(
            "no volume rule for a {n}-node element in {dim}D"
        ))),
    }
}

/// Element field from decoded results: the largest principal stress over
/// each element's integration points and the element's area or volume.
/// Elements without stress output are left out.
pub fn field_from_results(
    load_level: f64,
    nodes: &NodeTable,
    elements: &ElementTable,
    stresses: &StressTable,
) -> Result<ElementField, WeibullError> {
    let mut peak: BTreeMap<i64, f64> = BTreeMap::new();
    for row in &stresses.rows {
        let s1 = max_principal_stress(&row.components)?;
        let e = peak.entry(row.element_id).or_insert(f64::NEG_INFINITY);
        *e = e.max(s1);
    }
    let mut ids = Vec::new();
    let mut sigma1 = Vec::new();
    let mut volume = Vec::new();
    for element in &elements.rows {
        let Some(&s1) = peak.get(&element.element_id) else {
            continue;
        };
        let coords = element
            .connectivity
            .iter()
            .map(|id| {
                nodes.get(*id).map(|n| n.coords.clone()).ok_or_else(|| {
                    WeibullError::InvalidField(format!(
                        "element {} references unknown node {id}",
                        element.element_id
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        ids.push(element.element_id);
        sigma1.push(s1);
        volume.push(element_measure(&coords)?);
    }
    if let Some(orphan) = peak.keys().find(|id| !ids.contains(id)) {
        return Err(WeibullError::InvalidField(format!(
            "stress output for unknown element {orphan}"
        )));
    }
    ElementField::with_ids(load_level, ids, sigma1, volume)
}

/// Load level with its element ids, stresses and volumes.
type LevelRows = (f64, Vec<i64>, Vec<f64>, Vec<f64>);

/// Reads `load_level,element_id,sigma1,volume` rows (header optional) and
/// groups them into one field per load level, ascending.
pub fn read_fields_csv<R: BufRead>(reader: R) -> Result<Vec<ElementField>, WeibullError> {
    let mut levels: BTreeMap<u64, LevelRows> = BTreeMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if n == 0 && cells.first().is_some_and(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        let parse_err = |reason: String| WeibullError::Parse {
            line: n + 1,
            reason,
        };
        if cells.len() != 4 {
            return Err(parse_err(format!(
                "expected 4 columns, got {}",
                cells.len()
            )));
        }
        let num = |i: usize| {
            cells[i]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("column {}: {e}", i + 1)))
        };
        let load = num(0)?;
        let id = cells[1]
            .parse::<i64>()
            .map_err(|e| parse_err(format!("element id: {e}")))?;
        let entry = levels
            .entry(order_key(load))
            .or_insert_with(|| (load, vec![], vec![], vec![]));
        entry.1.push(id);
        entry.2.push(num(2)?);
        entry.3.push(num(3)?);
    }
    levels
        .into_values()
        .map(|(load, ids, s, v)| ElementField::with_ids(load, ids, s, v))
        .collect()
}

// total order on f64 that sorts like the numbers themselves
fn order_key(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// Reads one failure load per line (first column; header optional).
pub fn read_failure_loads<R: BufRead>(reader: R) -> Result<Vec<f64>, WeibullError> {
    let mut loads = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let cell = line.split(',').next().unwrap_or("").trim();
        if cell.is_empty() || cell.starts_with('#') {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) => loads.push(v),
            Err(_) if n == 0 => {}
            Err(e) => {
                return Err(WeibullError::Parse {
                    line: n + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(loads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(th: f64, m: f64, u: f64) -> WeibullParams {
        WeibullParams::new(th, m, u, 1.0).unwrap()
    }

    #[test]
    fn principal_stress_cases() {
        assert_eq!(max_principal_stress(&[3.0, 2.0, 1.0, 0.0]).unwrap(), 3.0);
        let tau = 42.0;
        assert!((max_principal_stress(&[0.0, 0.0, 0.0, tau]).unwrap() - tau).abs() < 1e-12);
        assert!(matches!(
            max_principal_stress(&[1.0, 2.0, 3.0]),
            Err(WeibullError::BadComponentCount(3))
        ));
        // out-of-plane component can be the largest
        assert_eq!(max_principal_stress(&[1.0, 1.0, 5.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn single_element_identity() {
        let p = params(1000.0, 2.0, 500.0);
        let f = ElementField::new(1.0, vec![2000.0], vec![1.0]).unwrap();
        assert_eq!(weibull_stress(&f, &p), 2000.0);
    }

    #[test]
    fn two_elements() {
        let p = params(1000.0, 2.0, 500.0);
        let f = ElementField::new(1.0, vec![2000.0, 2000.0], vec![1.0, 1.0]).unwrap();
        assert!((weibull_stress(&f, &p) - (1000.0 + 1000.0 * 2f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn below_threshold_gives_threshold() {
        let p = params(1000.0, 3.5, 500.0);
        let f = ElementField::new(1.0, vec![999.0, 10.0, -50.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(weibull_stress(&f, &p), 1000.0);
    }

    #[test]
    fn probability_points() {
        let p = params(1000.0, 4.0, 1200.0);
        assert_eq!(failure_probability(1000.0, &p).unwrap(), 0.0);
        let e = failure_probability(2200.0, &p).unwrap();
        assert!((e - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!(failure_probability(1e9, &p).unwrap() <= 1.0);
        assert!(failure_probability(1e5, &p).unwrap() > 0.999999);
        assert!(matches!(
            failure_probability(999.0, &p),
            Err(WeibullError::DomainError { .. })
        ));
    }

    #[test]
    fn empirical_cdf_values() {
        assert_eq!(empirical_cdf(1, 1).unwrap(), 0.5);
        assert!((empirical_cdf(10, 10).unwrap() - 9.7 / 10.4).abs() < 1e-15);
        assert!(matches!(
            empirical_cdf(0, 3),
            Err(WeibullError::RankOutOfRange { .. })
        ));
        assert!(matches!(
            empirical_cdf(4, 3),
            Err(WeibullError::RankOutOfRange { .. })
        ));
        let v: Vec<f64> = (1..=20).map(|j| empirical_cdf(j, 20).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!(v.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn hazard_single_element_matches_global() {
        let p = WeibullParams::new(1004.7, 12.0, 1209.8, 0.5).unwrap();
        let f = ElementField::new(100.0, vec![2100.0], vec![0.8]).unwrap();
        let h = hazard_map(&f, &p);
        assert_eq!(
            h.probability[0],
            failure_probability(weibull_stress(&f, &p), &p).unwrap()
        );
    }

    #[test]
    fn hazard_floor_and_anchor() {
        let p = params(1000.0, 4.0, 1200.0);
        let f = ElementField::new(1.0, vec![900.0, 2200.0], vec![1.0, 1.0]).unwrap();
        let h = hazard_map(&f, &p);
        assert_eq!(h.probability[0], 0.0);
        assert_eq!(h.log10_probability[0], LOG10_FLOOR);
        assert!((h.probability[1] - 0.6321205588285577).abs() < 1e-12);
    }

    #[test]
    fn field_validation() {
        assert!(ElementField::new(1.0, vec![], vec![]).is_err());
        assert!(ElementField::new(1.0, vec![1.0], vec![0.0]).is_err());
        assert!(ElementField::new(1.0, vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(WeibullParams::new(-1.0, 2.0, 1.0, 1.0).is_err());
        assert!(WeibullParams::new(0.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let f1 = ElementField::new(1.0, vec![100.0], vec![1.0]).unwrap();
        let f2 = ElementField::new(2.0, vec![200.0], vec![1.0]).unwrap();
        let samples = rank_failure_loads(&[1.2, 1.5]);
        assert!(matches!(
            fit_three_parameter(
                &[f1.clone(), f2.clone()],
                &samples,
                1.0,
                &FitOptions::default()
            ),
            Err(WeibullError::TooFewSamples(2))
        ));
        let samples = rank_failure_loads(&[1.2, 1.5, 2.5]);
        assert!(matches!(
            fit_three_parameter(
                &[f1.clone(), f2.clone()],
                &samples,
                1.0,
                &FitOptions::default()
            ),
            Err(WeibullError::OutOfFieldRange { .. })
        ));
        let samples = rank_failure_loads(&[1.5, 1.5, 1.5]);
        assert!(matches!(
            fit_three_parameter(&[f1, f2], &samples, 1.0, &FitOptions::default()),
            Err(WeibullError::DegenerateFit { distinct: 1 })
        ));
    }

    #[test]
    fn csv_fields_group_by_load() {
        let text = "load_level,element_id,sigma1,volume\n2.0,1,10,1\n1.0,1,5,1\n1.0,2,6,2\n";
        let fields = read_fields_csv(text.as_bytes()).unwrap();
        assert_eq!(fields.len(), 2);
        assert_eq!(fields[0].load_level, 1.0);
        assert_eq!(fields[0].element_ids, vec![1, 2]);
        assert_eq!(fields[0].volume, vec![1.0, 2.0]);
        let loads = read_failure_loads("failure_load\n3\n1.5\n".as_bytes()).unwrap();
        assert_eq!(loads, vec![3.0, 1.5]);
    }
}

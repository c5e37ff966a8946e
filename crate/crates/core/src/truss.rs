//! Two-bar plane truss sizing.
//!
//! Node 3 at `(L, 0)` is free; nodes 1 `(0, 0)` and 2 `(0, L)` are pinned.
//! Member 1 joins nodes 1 and 3 (horizontal, length `L`), member 2 joins
//! nodes 2 and 3 (diagonal, length `√2·L`). The load `P` acts downward at
//! node 3. Design variables are the two cross-sectional areas.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::path::PathBuf;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode_stream, DataItem, FilStream, LogicalRecord};
use crate::format::sig6;
use crate::jobs::{render_input, run_job_and_read, JobError, JobSpec};
use crate::records::{extract_nodal_field, RecordError, DISPLACEMENT_KEY, NODE_KEY};

pub const GRAVITY: f64 = 9.81;
/// Node id of the loaded node in exported results.
pub const FREE_NODE: i64 = 3;

#[derive(Debug, Error)]
pub enum TrussError {
    #[error("invalid truss problem: {0}")]
    InvalidProblem(String),
    #[error("stiffness matrix is singular (areas {0:?})")]
    SingularStiffness([f64; 2]),
    #[error("no feasible design: displacement limit exceeded even at the upper bounds ({0:?})")]
    Infeasible([f64; 2]),
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error(transparent)]
    Job(#[from] JobError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrussProblem {
    /// Young's modulus (Pa).
    #[serde(rename = "E")]
    pub youngs_modulus: f64,
    /// Density (kg/m³).
    pub rho: f64,
    #[serde(rename = "L")]
    pub length: f64,
    /// Applied load (N).
    #[serde(rename = "P")]
    pub load: f64,
    /// Displacement limit in both directions (m); may be infinite.
    pub d_max: f64,
    /// Stress limit (Pa).
    pub sigma_max: f64,
    /// `[A_min, A_max]` (m²).
    pub area_bounds: [f64; 2],
}

impl TrussProblem {
    /// Reference two-bar example.
    pub fn reference() -> Self {
        TrussProblem {
            youngs_modulus: 68.948e9,
            rho: 2767.990471,
            length: 9.144,
            load: 444.974e3,
            d_max: 0.0508,
            sigma_max: 172.369e6,
            area_bounds: [0.003650822800775, 0.0225806],
        }
    }

    pub fn validate(&self) -> Result<(), TrussError> {
        let positive = [
            ("E", self.youngs_modulus),
            ("rho", self.rho),
            ("L", self.length),
            ("P", self.load),
            ("d_max", self.d_max),
            ("sigma_max", self.sigma_max),
            ("A_min", self.area_bounds[0]),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 || (v.is_infinite() && name != "d_max") {
                return Err(TrussError::InvalidProblem(format!("{name} = {v}")));
            }
        }
        let [lo, hi] = self.area_bounds;
        if !(hi.is_finite() && hi > lo) {
            return Err(TrussError::InvalidProblem(format!(
                "area bounds [{lo}, {hi}]"
            )));
        }
        if self.lower_bound() >= hi {
            return Err(TrussError::InvalidProblem(format!(
                "stress-derived minimum area {} exceeds A_max {hi}",
                self.stress_area()
            )));
        }
        Ok(())
    }

    /// Smallest area keeping the diagonal member within `sigma_max`.
    pub fn stress_area(&self) -> f64 {
        SQRT_2 * self.load / self.sigma_max
    }

    /// Lower area bound actually used: the larger of `A_min` and
    /// [`stress_area`](Self::stress_area).
    pub fn lower_bound(&self) -> f64 {
        self.area_bounds[0].max(self.stress_area())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrussState {
    pub areas: [f64; 2],
    /// `(u_x, u_y)` at the free node.
    pub displacements: [f64; 2],
    pub member_stresses: [f64; 2],
    pub weight: f64,
}

impl fmt::Display for TrussState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "A1 = {} m^2", sig6(self.areas[0]))?;
        writeln!(f, "A2 = {} m^2", sig6(self.areas[1]))?;
        writeln!(f, "u_x = {} m", sig6(self.displacements[0]))?;
        writeln!(f, "u_y = {} m", sig6(self.displacements[1]))?;
        writeln!(f, "sigma1 = {} Pa", sig6(self.member_stresses[0]))?;
        writeln!(f, "sigma2 = {} Pa", sig6(self.member_stresses[1]))?;
        write!(f, "weight = {} N", sig6(self.weight))
    }
}

pub fn truss_weight(areas: [f64; 2], problem: &TrussProblem) -> f64 {
    GRAVITY * problem.rho * problem.length * (areas[0] + SQRT_2 * areas[1])
}

fn member_stresses(areas: [f64; 2], problem: &TrussProblem) -> [f64; 2] {
    [-problem.load / areas[0], SQRT_2 * problem.load / areas[1]]
}

/// Linear elastic solution of the free node from the assembled 2×2
/// stiffness.
pub fn solve_truss(areas: [f64; 2], problem: &TrussProblem) -> Result<TrussState, TrussError> {
    if !(areas[0] > 0.0 && areas[1] > 0.0) || !areas.iter().all(|a| a.is_finite()) {
        return Err(TrussError::SingularStiffness(areas));
    }
    let (e, l, p) = (problem.youngs_modulus, problem.length, problem.load);
    // member 1 along +x; member 2 from node 3 towards node 2, direction (-1, 1)/√2
    let k1 = e * areas[0] / l;
    let k2 = e * areas[1] / (SQRT_2 * l);
    let (kxx, kxy, kyy) = (k1 + 0.5 * k2, -0.5 * k2, 0.5 * k2);
    let det = kxx * kyy - kxy * kxy;
    if det.is_nan() || det == 0.0 {
        return Err(TrussError::SingularStiffness(areas));
    }
    let (fx, fy) = (0.0, -p);
    let ux = (kyy * fx - kxy * fy) / det;
    let uy = (kxx * fy - kxy * fx) / det;
    Ok(TrussState {
        areas,
        displacements: [ux, uy],
        member_stresses: member_stresses(areas, problem),
        weight: truss_weight(areas, problem),
    })
}

/// `[|u_y| - d_max, |u_x| - d_max]`; feasible when both are non-positive.
pub fn evaluate_constraints(state: &TrussState, problem: &TrussProblem) -> [f64; 2] {
    [
        state.displacements[1].abs() - problem.d_max,
        state.displacements[0].abs() - problem.d_max,
    ]
}

/// Something that produces a [`TrussState`] for a pair of areas.
pub trait TrussAnalysis {
    fn analyze(
        &mut self,
        areas: [f64; 2],
        problem: &TrussProblem,
    ) -> Result<TrussState, TrussError>;
}

/// In-process closed-form solver.
#[derive(Clone, Copy, Debug, Default)]
pub struct AnalyticTruss;

impl TrussAnalysis for AnalyticTruss {
    fn analyze(
        &mut self,
        areas: [f64; 2],
        problem: &TrussProblem,
    ) -> Result<TrussState, TrussError> {
        solve_truss(areas, problem)
    }
}

/// Input deck understood by [`solve_deck`]: `KEY=value` data lines after
/// `**` comments. `@A1@` and `@A2@` mark the lines rewritten per analysis.
pub fn deck_template(problem: &TrussProblem) -> String {
    format!(
        "** two-bar truss\n\
         *PARAMETER\n\
         E={:e}\n\
         L={:e}\n\
         P={:e}\n\
         ** area of member 1 @A1@\n\
         ** area of member 2 @A2@\n\
         *STEP\n\
         *STATIC\n\
         *END STEP\n\
         *FILE FORMAT, ASCII\n",
        problem.youngs_modulus, problem.length, problem.load
    )
}

fn deck_value(deck: &str, key: &str) -> Result<f64, TrussError> {
    deck.lines()
        .filter_map(|l| l.trim().split_once('='))
        .find(|(k, _)| k.trim().eq_ignore_ascii_case(key))
        .ok_or_else(|| TrussError::Analysis(format!("deck has no {key}= line")))?
        .1
        .trim()
        .parse()
        .map_err(|e| TrussError::Analysis(format!("{key}: {e}")))
}

/// Solves a rendered deck and returns the results file: node coordinates
/// and nodal displacements for all three nodes.
pub fn solve_deck(deck: &str) -> Result<String, TrussError> {
    let problem = TrussProblem {
        youngs_modulus: deck_value(deck, "E")?,
        length: deck_value(deck, "L")?,
        load: deck_value(deck, "P")?,
        ..TrussProblem::reference()
    };
    let areas = [deck_value(deck, "A1")?, deck_value(deck, "A2")?];
    let state = solve_truss(areas, &problem)?;
    let l = problem.length;
    let nodes = [
        (1, [0.0, 0.0], [0.0, 0.0]),
        (2, [0.0, l], [0.0, 0.0]),
        (3, [l, 0.0], state.displacements),
    ];
    let mut records = Vec::new();
    for (id, xy, _) in &nodes {
        let attrs = vec![
            DataItem::Int(*id),
            DataItem::Float(xy[0]),
            DataItem::Float(xy[1]),
        ];
        records.push(LogicalRecord::new(NODE_KEY, attrs).expect("non-negative key"));
    }
    for (id, _, u) in &nodes {
        let attrs = vec![
            DataItem::Int(*id),
            DataItem::Float(u[0]),
            DataItem::Float(u[1]),
        ];
        records.push(LogicalRecord::new(DISPLACEMENT_KEY, attrs).expect("non-negative key"));
    }
    Ok(encode_stream(&FilStream::new(records)))
}

/// Runs each analysis as an external job: renders the deck, launches the
/// command, and reads the free-node displacement back from `{job}.fil`.
#[derive(Clone, Debug)]
pub struct ExternalTruss {
    pub job: JobSpec,
    pub template: String,
    pub runs: usize,
}

impl ExternalTruss {
    pub fn new(job: JobSpec, template: String) -> Self {
        ExternalTruss {
            job,
            template,
            runs: 0,
        }
    }

    pub fn deck_path(&self) -> PathBuf {
        self.job.workdir.join(format!("{}.inp", self.job.job_name))
    }
}

impl TrussAnalysis for ExternalTruss {
    fn analyze(
        &mut self,
        areas: [f64; 2],
        problem: &TrussProblem,
    ) -> Result<TrussState, TrussError> {
        let a1 = format!("A1={:e}", areas[0]);
        let a2 = format!("A2={:e}", areas[1]);
        let deck = render_input(&self.template, &[("@A1@", &a1), ("@A2@", &a2)])?;
        std::fs::write(self.deck_path(), deck).map_err(JobError::from)?;
        let stream = run_job_and_read(&self.job)?;
        self.runs += 1;
        let field = extract_nodal_field(&stream, DISPLACEMENT_KEY)?;
        let row = field
            .rows
            .iter()
            .find(|r| r.node_id == FREE_NODE)
            .ok_or_else(|| TrussError::Analysis(format!("no displacement for node {FREE_NODE}")))?;
        if row.components.len() < 2 {
            return Err(TrussError::Analysis(
                "displacement record has fewer than 2 components".into(),
            ));
        }
        Ok(TrussState {
            areas,
            displacements: [row.components[0], row.components[1]],
            member_stresses: member_stresses(areas, problem),
            weight: truss_weight(areas, problem),
        })
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeOptions {
    /// Convergence on the step length in box-scaled variables.
    pub tol_f: f64,
    /// Allowed constraint violation as a fraction of `d_max`.
    pub tol_c: f64,
    pub max_iter: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            tol_f: 1e-3,
            tol_c: 1e-3,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrussOptimum {
    pub state: TrussState,
    pub constraints: [f64; 2],
    pub iterations: usize,
    pub objective_evals: usize,
    pub constraint_evals: usize,
}

const FD_STEP: f64 = 1e-6;

/// Objective and constraints on the unit square.
struct Scaled<'a, A: TrussAnalysis> {
    problem: &'a TrussProblem,
    analysis: &'a mut A,
    lo: f64,
    width: f64,
    f_scale: f64,
    constrained: bool,
    objective_evals: usize,
    constraint_evals: usize,
}

impl<A: TrussAnalysis> Scaled<'_, A> {
    fn areas(&self, z: [f64; 2]) -> [f64; 2] {
        [self.lo + self.width * z[0], self.lo + self.width * z[1]]
    }

    fn f(&mut self, z: [f64; 2]) -> f64 {
        self.objective_evals += 1;
        truss_weight(self.areas(z), self.problem) / self.f_scale
    }

    fn g(&mut self, z: [f64; 2]) -> Result<[f64; 2], TrussError> {
        if !self.constrained {
            return Ok([f64::NEG_INFINITY; 2]);
        }
        self.constraint_evals += 1;
        let state = self.analysis.analyze(self.areas(z), self.problem)?;
        let c = evaluate_constraints(&state, self.problem);
        Ok([c[0] / self.problem.d_max, c[1] / self.problem.d_max])
    }

    /// Forward differences; steps go inward at the upper bound.
    fn gradients(
        &mut self,
        z: [f64; 2],
        f0: f64,
        g0: [f64; 2],
    ) -> Result<([f64; 2], [[f64; 2]; 2]), TrussError> {
        let mut df = [0.0; 2];
        let mut dg = [[0.0; 2]; 2];
        for i in 0..2 {
            let h = if z[i] + FD_STEP <= 1.0 {
                FD_STEP
            } else {
                -FD_STEP
            };
            let mut zh = z;
            zh[i] += h;
            df[i] = (self.f(zh) - f0) / h;
            if self.constrained {
                let gh = self.g(zh)?;
                for j in 0..2 {
                    dg[j][i] = (gh[j] - g0[j]) / h;
                }
            }
        }
        Ok((df, dg))
    }
}

/// One linear inequality `a·d <= b`.
#[derive(Clone, Copy, Debug)]
struct Row {
    a: [f64; 2],
    b: f64,
}

fn solve2(m: [[f64; 2]; 2], r: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if det.is_nan() || det.abs() <= 1e-14 * scale * scale {
        return None;
    }
    Some([
        (r[0] * m[1][1] - m[0][1] * r[1]) / det,
        (m[0][0] * r[1] - m[1][0] * r[0]) / det,
    ])
}

/// `min g·d + ½ dᵀBd` subject to `rows`, by enumerating active sets of size
/// at most two. Returns the step and one multiplier per row.
fn solve_qp(b: [[f64; 2]; 2], g: [f64; 2], rows: &[Row]) -> Option<([f64; 2], Vec<f64>)> {
    let n = rows.len();
    let feasible = |d: [f64; 2]| {
        rows.iter()
            .all(|r| r.a[0] * d[0] + r.a[1] * d[1] <= r.b + 1e-12 * (1.0 + r.b.abs()))
    };
    let value = |d: [f64; 2]| {
        g[0] * d[0]
            + g[1] * d[1]
            + 0.5
                * (d[0] * (b[0][0] * d[0] + b[0][1] * d[1])
                    + d[1] * (b[1][0] * d[0] + b[1][1] * d[1]))
    };
    let mut best: Option<([f64; 2], Vec<f64>, f64)> = None;
    let mut consider = |d: [f64; 2], lambda: Vec<f64>| {
        if lambda.iter().all(|&l| l >= -1e-12) && feasible(d) {
            let v = value(d);
            if best.as_ref().is_none_or(|b| v < b.2) {
                best = Some((d, lambda, v));
            }
        }
    };

    // no active constraints
    if let Some(d) = solve2(b, [-g[0], -g[1]]) {
        consider(d, vec![0.0; n]);
    }
    // one active: [B a; aᵀ 0][d; λ] = [-g; b]
    for i in 0..n {
        let a = rows[i].a;
        let Some(binv_a) = solve2(b, a) else { continue };
        let Some(binv_g) = solve2(b, g) else { continue };
        let denom = a[0] * binv_a[0] + a[1] * binv_a[1];
        if denom.abs() < 1e-300 {
            continue;
        }
        let lam = -(rows[i].b + a[0] * binv_g[0] + a[1] * binv_g[1]) / denom;
        let d = [-binv_g[0] - lam * binv_a[0], -binv_g[1] - lam * binv_a[1]];
        let mut lambda = vec![0.0; n];
        lambda[i] = lam;
        consider(d, lambda);
    }
    // two active: d fixed by the pair, multipliers from the stationarity row
    for i in 0..n {
        for j in i + 1..n {
            let Some(d) = solve2([rows[i].a, rows[j].a], [rows[i].b, rows[j].b]) else {
                continue;
            };
            let bd = [
                b[0][0] * d[0] + b[0][1] * d[1],
                b[1][0] * d[0] + b[1][1] * d[1],
            ];
            let rhs = [-(g[0] + bd[0]), -(g[1] + bd[1])];
            let at = [[rows[i].a[0], rows[j].a[0]], [rows[i].a[1], rows[j].a[1]]];
            let Some(l) = solve2(at, rhs) else { continue };
            let mut lambda = vec![0.0; n];
            lambda[i] = l[0];
            lambda[j] = l[1];
            consider(d, lambda);
        }
    }
    best.map(|(d, l, _)| (d, l))
}

/// Minimizes the truss weight subject to the displacement limits and the
/// area bounds with a sequential quadratic programming loop: finite-
/// difference gradients, damped BFGS Hessian, active-set subproblems and an
/// exact-penalty line search, all in variables scaled to the unit square.
///
/// When `d_max` is infinite the displacement constraints are skipped.
pub fn optimize_truss<A: TrussAnalysis>(
    problem: &TrussProblem,
    x0: [f64; 2],
    opts: &OptimizeOptions,
    analysis: &mut A,
) -> Result<TrussOptimum, TrussError> {
    problem.validate()?;
    let (lo, hi) = (problem.lower_bound(), problem.area_bounds[1]);
    if x0
        .iter()
        .any(|x| !(x.is_finite() && *x >= problem.area_bounds[0] && *x <= hi))
    {
        return Err(TrussError::InvalidProblem(format!(
            "x0 {x0:?} outside the bounds"
        )));
    }
    let width = hi - lo;
    let mut sp = Scaled {
        problem,
        analysis,
        lo,
        width,
        f_scale: truss_weight(x0, problem),
        constrained: problem.d_max.is_finite(),
        objective_evals: 0,
        constraint_evals: 0,
    };

    if sp.constrained {
        let g_top = sp.g([1.0, 1.0])?;
        if g_top.iter().any(|&g| g > opts.tol_c) {
            return Err(TrussError::Infeasible([hi, hi]));
        }
    }

    let mut z = x0.map(|x| ((x - lo) / width).clamp(0.0, 1.0));
    let mut f = sp.f(z);
    let mut g = sp.g(z)?;
    let (mut df, mut dg) = sp.gradients(z, f, g)?;
    let mut hess = [[1.0, 0.0], [0.0, 1.0]];
    let mut penalty = 1.0f64;
    let violation = |g: [f64; 2]| g.iter().map(|v| v.max(0.0)).sum::<f64>();

    for iteration in 1..=opts.max_iter {
        let mut rows: Vec<Row> = Vec::with_capacity(6);
        for i in 0..2 {
            let mut a = [0.0; 2];
            a[i] = 1.0;
            rows.push(Row { a, b: 1.0 - z[i] });
            a[i] = -1.0;
            rows.push(Row { a, b: z[i] });
        }
        if sp.constrained {
            for j in 0..2 {
                rows.push(Row { a: dg[j], b: -g[j] });
            }
        }
        let (d, lambda) = match solve_qp(hess, df, &rows) {
            Some(s) => s,
            None => {
                // inconsistent linearization: relax the constraint rows by
                // the smallest fraction that admits a solution
                let relaxed = |t: f64| {
                    let mut r = rows.clone();
                    for row in r.iter_mut().skip(4) {
                        row.b += t * (-row.b).max(0.0);
                    }
                    solve_qp(hess, df, &r)
                };
                let (mut lo_t, mut hi_t) = (0.0, 1.0);
                if relaxed(hi_t).is_none() {
                    return Err(TrussError::NoConvergence {
                        iterations: iteration,
                    });
                }
                for _ in 0..50 {
                    let mid = 0.5 * (lo_t + hi_t);
                    if relaxed(mid).is_some() {
                        hi_t = mid
                    } else {
                        lo_t = mid
                    }
                }
                relaxed(hi_t).expect("feasible at the upper relaxation")
            }
        };
        let lambda_g: [f64; 2] = if sp.constrained {
            [lambda[4], lambda[5]]
        } else {
            [0.0; 2]
        };
        penalty = penalty.max(1.5 * lambda_g[0].max(lambda_g[1]) + 1e-3);

        let merit = |f: f64, g: [f64; 2]| f + penalty * violation(g);
        let phi0 = merit(f, g);
        let slope = df[0] * d[0] + df[1] * d[1] - penalty * violation(g);
        let mut alpha = 1.0;
        let (z_new, f_new, g_new) = loop {
            let zt = [
                (z[0] + alpha * d[0]).clamp(0.0, 1.0),
                (z[1] + alpha * d[1]).clamp(0.0, 1.0),
            ];
            let ft = sp.f(zt);
            let gt = sp.g(zt)?;
            if merit(ft, gt) <= phi0 + 1e-4 * alpha * slope.min(0.0) || alpha < 1e-10 {
                break (zt, ft, gt);
            }
            alpha *= 0.5;
        };
        let step = [z_new[0] - z[0], z_new[1] - z[1]];
        let (df_new, dg_new) = sp.gradients(z_new, f_new, g_new)?;
        debug!(
            "truss iteration {iteration}: areas {:?} weight {} violation {:e} step {alpha}",
            sp.areas(z_new),
            f_new * sp.f_scale,
            violation(g_new)
        );

        // damped BFGS on the Lagrangian gradient
        let grad_l = |df: [f64; 2], dg: [[f64; 2]; 2]| {
            [
                df[0] + lambda_g[0] * dg[0][0] + lambda_g[1] * dg[1][0],
                df[1] + lambda_g[0] * dg[0][1] + lambda_g[1] * dg[1][1],
            ]
        };
        let (l_old, l_new) = (grad_l(df, dg), grad_l(df_new, dg_new));
        let y = [l_new[0] - l_old[0], l_new[1] - l_old[1]];
        let bs = [
            hess[0][0] * step[0] + hess[0][1] * step[1],
            hess[1][0] * step[0] + hess[1][1] * step[1],
        ];
        let sbs = step[0] * bs[0] + step[1] * bs[1];
        if sbs > 1e-300 {
            let sy = step[0] * y[0] + step[1] * y[1];
            let theta = if sy >= 0.2 * sbs {
                1.0
            } else {
                0.8 * sbs / (sbs - sy)
            };
            let r = [
                theta * y[0] + (1.0 - theta) * bs[0],
                theta * y[1] + (1.0 - theta) * bs[1],
            ];
            let sr = step[0] * r[0] + step[1] * r[1];
            if sr > 1e-300 {
                for i in 0..2 {
                    for j in 0..2 {
                        hess[i][j] += r[i] * r[j] / sr - bs[i] * bs[j] / sbs;
                    }
                }
            }
        }

        z = z_new;
        f = f_new;
        g = g_new;
        df = df_new;
        dg = dg_new;

        let feasible = violation(g) <= opts.tol_c;
        let small = step[0].abs().max(step[1].abs()) <= opts.tol_f;
        if feasible && small {
            let areas = sp.areas(z);
            let state = sp.analysis.analyze(areas, problem)?;
            return Ok(TrussOptimum {
                constraints: evaluate_constraints(&state, problem),
                state,
                iterations: iteration,
                objective_evals: sp.objective_evals,
                constraint_evals: sp.constraint_evals,
            });
        }
    }
    Err(TrussError::NoConvergence {
        iterations: opts.max_iter,
    })
}

/// Problem file contents: the problem fields plus an optional start point
/// and tolerances.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrussConfig {
    #[serde(flatten)]
    pub problem: TrussProblem,
    pub x0: Option<[f64; 2]>,
    pub tol_f: Option<f64>,
    pub tol_c: Option<f64>,
}

impl TrussConfig {
    pub fn parse(text: &str) -> Result<Self, TrussError> {
        Ok(toml::from_str(text)?)
    }

    pub fn options(&self) -> OptimizeOptions {
        let d = OptimizeOptions::default();
        OptimizeOptions {
            tol_f: self.tol_f.unwrap_or(d.tol_f),
            tol_c: self.tol_c.unwrap_or(d.tol_c),
            ..d
        }
    }

    pub fn start(&self) -> [f64; 2] {
        self.x0.unwrap_or([0.0037, 0.0049])
    }
}

/// Structured report of an optimum (`key = value` lines).
pub fn report(opt: &TrussOptimum) -> String {
    let s = &opt.state;
    format!(
        "areas = [{}, {}]\nweight = {}\nu_x = {}\nu_y = {}\nsigma = [{}, {}]\nconstraints = [{}, {}]\niterations = {}\nobjective_evals = {}\nconstraint_evals = {}\n",
        sig6(s.areas[0]),
        sig6(s.areas[1]),
        sig6(s.weight),
        sig6(s.displacements[0]),
        sig6(s.displacements[1]),
        sig6(s.member_stresses[0]),
        sig6(s.member_stresses[1]),
        sig6(opt.constraints[0]),
        sig6(opt.constraints[1]),
        opt.iterations,
        opt.objective_evals,
        opt.constraint_evals
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stiffness_solution_matches_unit_load() {
        let p = TrussProblem::reference();
        let a = [0.004, 0.006];
        let s = solve_truss(a, &p).unwrap();
        let c = p.load * p.length / p.youngs_modulus;
        assert!((s.displacements[1] + c * (1.0 / a[0] + 2.0 * SQRT_2 / a[1])).abs() < 1e-15);
        assert!((s.displacements[0] + c / a[0]).abs() < 1e-15);
    }

    #[test]
    fn qp_box_only() {
        let (d, _) = solve_qp(
            [[1.0, 0.0], [0.0, 1.0]],
            [1.0, 1.0],
            &[
                Row {
                    a: [-1.0, 0.0],
                    b: 0.5,
                },
                Row {
                    a: [0.0, -1.0],
                    b: 2.0,
                },
            ],
        )
        .unwrap();
        assert!((d[0] + 0.5).abs() < 1e-12 && (d[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_roundtrip() {
        let text = "E = 68.948e9\nrho = 2767.99\nL = 9.144\nP = 444974.0\nd_max = 0.0508\nsigma_max = 172.369e6\narea_bounds = [0.00365, 0.02258]\nx0 = [0.0037, 0.0049]\n";
        let c = TrussConfig::parse(text).unwrap();
        assert_eq!(c.problem.length, 9.144);
        assert_eq!(c.start(), [0.0037, 0.0049]);
        assert_eq!(c.options().tol_c, 1e-3);
        assert!(TrussConfig::parse("E = 1").is_err());
    }
}

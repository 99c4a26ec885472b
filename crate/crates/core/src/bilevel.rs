//! Branch loop with feasible-extension cuts, global assembly over all
//! retained supports, and local certification of branch minimizers.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fe::{cut_polynomial, synthesize, FeKind, FeasibleExtension};
use crate::model::{active_set, eliminate_lower_equalities, problem_stats, BackMap, BilevelProblem, ModelError};
use crate::plme::{build_branch_system, build_plme, Ball, BranchSystem};
use crate::poly::{LowerName, PolyError, Polynomial, VarSpace};
use crate::pop::{minimize_rational, solve_pop, PopConfig, PopError, PopInstance, PopStatus};

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Override of the generic rank `t`.
    pub rank: Option<usize>,
    pub kmax_extra: u32,
    /// Radius of an optional ball `|w| <= R` added to every branch.
    pub ball: Option<f64>,
    /// Radius for ball-based local checks.
    pub rho: f64,
    pub eta_tol: f64,
    pub max_iter: usize,
    pub threads: Option<usize>,
    pub seed: u64,
    /// Accept the first branch solution without checking the lower level.
    pub lower_convex: bool,
    pub support_cap: usize,
    pub active_tol: f64,
    /// Moment budget of the first pass over the branches. Branches that
    /// needed a larger relaxation are revisited without the budget unless
    /// their bound is already dominated by the incumbent.
    pub screen_moments: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rank: None,
            kmax_extra: 3,
            ball: None,
            rho: 0.05,
            eta_tol: 1e-6,
            max_iter: 10,
            threads: None,
            seed: 42,
            lower_convex: false,
            support_cap: 2000,
            active_tol: 1e-4,
            screen_moments: Some(2000),
        }
    }
}

impl SolverConfig {
    pub fn pop_config(&self) -> PopConfig {
        PopConfig { kmax_extra: self.kmax_extra, seed: self.seed, ball: self.ball, ..PopConfig::default() }
    }

    fn eta_ok(&self, eta: f64, scale: f64) -> bool {
        eta >= -self.eta_tol * scale.abs().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BilevelError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pop(#[from] PopError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("generic rank is zero: the lower constraints do not involve z")]
    ZeroRank,
    #[error("unknown or eliminated constraint label {0}")]
    UnknownLabel(usize),
    #[error("support must have exactly {0} labels")]
    SupportSize(usize),
    #[error("lower feasible set is empty at the given x")]
    EmptyLowerSet,
    #[error("lower level is unbounded at the given x")]
    LowerUnbounded,
    #[error("thread pool: {0}")]
    Threads(String),
}

/// Problem after removing constant lower equalities, with the map back.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub original: BilevelProblem,
    pub problem: BilevelProblem,
    pub back: BackMap,
}

impl Prepared {
    pub fn new(p: &BilevelProblem) -> Result<Self, BilevelError> {
        match eliminate_lower_equalities(p) {
            Ok((problem, back)) => Ok(Self { original: p.clone(), problem, back }),
            Err(ModelError::UnsupportedElimination(_)) => {
                Ok(Self { original: p.clone(), problem: p.clone(), back: BackMap::identity(p.space) })
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn lift(&self, w: &[f64]) -> Vec<f64> {
        self.back.lift(w)
    }

    /// Lift a lower point `z` given `x`.
    pub fn lift_lower(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut w = x.to_vec();
        w.extend_from_slice(z);
        self.back.lift(&w)[x.len()..].to_vec()
    }
}

/// Lower-level check at `(x, y)`: `eta = min f(x, .) - f(x, y)`.
#[derive(Debug, Clone, Serialize)]
pub struct LowerCheck {
    pub eta: f64,
    /// Certified lower bound on the lower optimal value.
    pub omega: f64,
    pub f_y: f64,
    /// A lower minimizer, when one was extracted.
    pub z: Option<Vec<f64>>,
    /// Whether `omega` is a certified bound.
    pub certified: bool,
}

fn split(p: &BilevelProblem, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (w[..p.n()].to_vec(), w[p.n()..].to_vec())
}

fn fix_upper(p: &BilevelProblem, g: &Polynomial, x: &[f64], lsp: VarSpace) -> Polynomial {
    let n = p.n();
    let fixed: Vec<(usize, f64)> = x.iter().copied().enumerate().collect();
    let map: Vec<Option<usize>> = (0..p.space.total()).map(|i| i.checked_sub(n)).collect();
    g.fix_vars(&fixed).remap(lsp, &map)
}

/// Minimize the lower objective at fixed `x` and compare with `f(x, y)`.
pub fn verify_lower(p: &BilevelProblem, x: &[f64], y: &[f64], cfg: &SolverConfig) -> Result<LowerCheck, BilevelError> {
    let lsp = VarSpace::new(0, p.p());
    let mut w = x.to_vec();
    w.extend_from_slice(y);
    let f_y = p.lower_obj.evaluate(&w)?;
    let mut eqs = Vec::new();
    let mut ineqs = Vec::new();
    for r in &p.lower_rows {
        let g = fix_upper(p, &p.g(r), x, lsp).normalized();
        match r.kind {
            crate::model::RowKind::Eq => eqs.push(g),
            crate::model::RowKind::Ineq => ineqs.push(g),
        }
    }
    let mut pcfg = cfg.pop_config();
    pcfg.ball = None;
    let num = fix_upper(p, p.lower_obj.num(), x, lsp);
    let (omega, z, certified) = if p.lower_obj.is_polynomial() {
        let pop = PopInstance { space: lsp, objective: num, eqs, ineqs };
        let r = solve_pop(&pop, &pcfg)?;
        match r.status {
            PopStatus::Infeasible => return Err(BilevelError::EmptyLowerSet),
            PopStatus::Unbounded => return Err(BilevelError::LowerUnbounded),
            PopStatus::Optimal => (r.bound, r.best_point().map(<[f64]>::to_vec), true),
            PopStatus::Stalled => (r.bound, r.best_point().map(<[f64]>::to_vec), r.bound.is_finite()),
        }
    } else {
        let den = fix_upper(p, p.lower_obj.den(), x, lsp);
        let r = minimize_rational(&num, &den, &eqs, &ineqs, &pcfg)?;
        match r.status {
            PopStatus::Infeasible => return Err(BilevelError::EmptyLowerSet),
            PopStatus::Unbounded => return Err(BilevelError::LowerUnbounded),
            _ => (r.lower, r.point, r.lower.is_finite()),
        }
    };
    Ok(LowerCheck { eta: omega - f_y, omega, f_y, z, certified })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchStatus {
    Solved,
    Infeasible,
    FeUnavailable,
    MaxIter,
    Stalled,
}

impl BranchStatus {
    /// Whether the branch value is settled (a solution or infeasibility).
    pub fn is_final(self) -> bool {
        matches!(self, BranchStatus::Solved | BranchStatus::Infeasible)
    }
}

/// One pass of the cut loop.
#[derive(Debug, Clone, Serialize)]
pub struct LoopRecord {
    pub k: usize,
    pub status: PopStatus,
    pub bound: f64,
    pub point: Option<Vec<f64>>,
    pub eta: Option<f64>,
    pub z: Option<Vec<f64>>,
    pub fe_kind: Option<FeKind>,
    pub q: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchOutcome {
    /// 1-based constraint labels of the support.
    pub support: Vec<usize>,
    #[serde(skip)]
    pub rows: Vec<usize>,
    pub status: BranchStatus,
    pub value: Option<f64>,
    /// Lower bound on the branch value (equal to `value` when solved).
    pub bound: Option<f64>,
    /// Minimizing points `(x, y)` of the branch.
    pub points: Vec<Vec<f64>>,
    pub iterations: usize,
    pub log: Vec<LoopRecord>,
    #[serde(skip)]
    pub cuts: Vec<FeasibleExtension>,
    pub message: Option<String>,
    #[serde(skip)]
    pub seconds: f64,
    /// The hierarchy stopped at the moment budget.
    #[serde(skip)]
    pub truncated: bool,
}

fn branch_pop(p: &BilevelProblem, sys: &BranchSystem) -> PopInstance {
    PopInstance {
        space: p.space,
        objective: p.upper_obj.clone(),
        eqs: sys.eqs.iter().map(|(g, _)| g.normalized()).collect(),
        ineqs: sys.ineqs.iter().map(|(g, _)| g.normalized()).collect(),
    }
}

fn sorted_points(pop: &PopInstance, pts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut v: Vec<(f64, Vec<f64>)> = pts.iter().map(|w| (pop.objective.eval(w), w.clone())).collect();
    v.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| {
            a.1.iter().zip(&b.1).map(|(s, t)| s.total_cmp(t)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    v.into_iter().map(|(_, w)| w).collect()
}

fn display_q(p: &BilevelProblem, q: &[Polynomial]) -> Vec<String> {
    let _ = p;
    q.iter().map(|g| g.display_with(LowerName::Y).to_string()).collect()
}

/// Solve one branch `P_J` with the cut loop.
pub fn solve_branch(p: &BilevelProblem, rows: &[usize], cfg: &SolverConfig) -> Result<BranchOutcome, BilevelError> {
    solve_branch_budget(p, rows, cfg, None)
}

fn solve_branch_budget(p: &BilevelProblem, rows: &[usize], cfg: &SolverConfig, max_moments: Option<usize>) -> Result<BranchOutcome, BilevelError> {
    let start = Instant::now();
    let plme = build_plme(p, rows)?;
    let pcfg = PopConfig { max_moments, ..cfg.pop_config() };
    let mut out = BranchOutcome {
        support: p.labels(rows),
        rows: rows.to_vec(),
        status: BranchStatus::MaxIter,
        value: None,
        bound: None,
        points: Vec::new(),
        iterations: 0,
        log: Vec::new(),
        cuts: Vec::new(),
        message: None,
        seconds: 0.0,
        truncated: false,
    };
    let mut cuts: Vec<Polynomial> = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    for k in 0..cfg.max_iter {
        out.iterations = k + 1;
        let sys = build_branch_system(p, &plme, &cuts, None);
        let pop = branch_pop(p, &sys);
        let r = solve_pop(&pop, &pcfg)?;
        let mut rec = LoopRecord { k, status: r.status, bound: r.bound, point: None, eta: None, z: None, fe_kind: None, q: Vec::new() };
        match r.status {
            PopStatus::Infeasible => {
                out.status = BranchStatus::Infeasible;
                out.bound = Some(f64::INFINITY);
                out.log.push(rec);
                break;
            }
            PopStatus::Unbounded | PopStatus::Stalled => {
                out.status = BranchStatus::Stalled;
                out.bound = r.bound.is_finite().then_some(r.bound);
                out.truncated = r.truncated;
                out.message = Some(format!("relaxation {:?} up to order {}", r.status, r.order));
                out.log.push(rec);
                break;
            }
            PopStatus::Optimal => {}
        }
        out.bound = Some(r.bound);
        let pts = sorted_points(&pop, &r.points.points);
        rec.point = pts.first().cloned();
        if cfg.lower_convex {
            let best = pop.objective.eval(&pts[0]);
            out.status = BranchStatus::Solved;
            out.value = Some(best);
            out.points = pts.iter().filter(|w| pop.objective.eval(w) <= best + 1e-6 * (1.0 + best.abs())).cloned().collect();
            out.log.push(rec);
            break;
        }
        let mut accepted = Vec::new();
        let mut first_check = None;
        for w in &pts {
            let (x, y) = split(p, w);
            let chk = match verify_lower(p, &x, &y, cfg) {
                Ok(c) => c,
                Err(e) => {
                    out.message = Some(e.to_string());
                    continue;
                }
            };
            if chk.certified && cfg.eta_ok(chk.eta, chk.f_y) {
                accepted.push((w.clone(), chk));
            } else if first_check.is_none() {
                first_check = Some((w.clone(), chk));
            }
        }
        if let Some((w0, c0)) = accepted.first() {
            let best = pop.objective.eval(w0);
            rec.point = Some(w0.clone());
            rec.eta = Some(c0.eta);
            out.status = BranchStatus::Solved;
            out.value = Some(best);
            out.points = accepted
                .iter()
                .filter(|(w, _)| pop.objective.eval(w) <= best + 1e-6 * (1.0 + best.abs()))
                .map(|(w, _)| w.clone())
                .collect();
            out.message = None;
            out.log.push(rec);
            break;
        }
        let Some((w, chk)) = first_check else {
            out.status = BranchStatus::Stalled;
            out.log.push(rec);
            break;
        };
        rec.point = Some(w.clone());
        rec.eta = Some(chk.eta);
        rec.z = chk.z.clone();
        // a cut that leaves the point in place means the gap is below what
        // the relaxation can resolve
        let repeated = prev.as_ref().is_some_and(|q| q.iter().zip(&w).all(|(a, b)| (a - b).abs() <= STAGNATION_STEP));
        if repeated && chk.certified && chk.eta >= -ETA_RESOLUTION * chk.f_y.abs().max(1.0) {
            out.status = BranchStatus::Solved;
            out.value = Some(pop.objective.eval(&w));
            out.points = vec![w.clone()];
            out.message = Some(format!("gap {:.1e} is within the relaxation resolution", chk.eta));
            out.log.push(rec);
            break;
        }
        prev = Some(w.clone());
        let (x, y) = split(p, &w);
        let usable_z = chk.z.as_ref().filter(|z| {
            let mut wz = x.clone();
            wz.extend_from_slice(z);
            p.lower_obj.evaluate(&wz).is_ok_and(|fz| !cfg.eta_ok(fz - chk.f_y, chk.f_y))
        });
        let Some(z) = usable_z else {
            out.status = BranchStatus::Stalled;
            out.message = Some("lower level could not be certified or improved".into());
            out.log.push(rec);
            break;
        };
        // coordinates the lower solve left in place up to extraction noise
        // are held exactly, so the extension can keep them as `y_i`
        let z: Vec<f64> = z.iter().zip(&y).map(|(&zi, &yi)| if (zi - yi).abs() <= HOLD_TOL * (1.0 + yi.abs()) { yi } else { zi }).collect();
        rec.z = Some(z.clone());
        let Some(fe) = synthesize(p, &x, &y, &z, cfg.seed) else {
            out.status = BranchStatus::FeUnavailable;
            out.log.push(rec);
            break;
        };
        rec.fe_kind = Some(fe.kind);
        rec.q = display_q(p, &fe.q);
        cuts.push(cut_polynomial(p, &fe.q));
        out.cuts.push(fe);
        out.log.push(rec);
    }
    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Target coordinates this close to the current `y` are snapped onto it.
const HOLD_TOL: f64 = 1e-6;
/// Largest coordinate change treated as "the cut did not move the point".
const STAGNATION_STEP: f64 = 1e-4;
/// Gap accepted once a cut fails to move the point.
const ETA_RESOLUTION: f64 = 1e-4;

/// Branch for 1-based labels.
pub fn solve_branch_labels(p: &BilevelProblem, labels: &[usize], cfg: &SolverConfig) -> Result<BranchOutcome, BilevelError> {
    let t = problem_stats(p, cfg.rank, cfg.seed, cfg.support_cap)?.t;
    if labels.len() != t {
        return Err(BilevelError::SupportSize(t));
    }
    let mut rows = p.rows_from_labels(labels).ok_or_else(|| BilevelError::UnknownLabel(labels[0]))?;
    rows.sort_unstable();
    solve_branch(p, &rows, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalMethod {
    /// The support contains the active set.
    ContainsActive,
    /// Every retained support inside the active set has value at least
    /// the point's value.
    ActiveSubsets,
    /// No nearby point of any relevant piece improves the value.
    Ball,
    Uncertified,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalReport {
    pub support: Vec<usize>,
    pub value: f64,
    pub point: Vec<f64>,
    pub active: Vec<usize>,
    pub method: LocalMethod,
}

fn branch_value(o: &BranchOutcome) -> Option<f64> {
    match o.status {
        BranchStatus::Solved => o.value,
        BranchStatus::Infeasible => Some(f64::INFINITY),
        _ => None,
    }
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|v| b.contains(v))
}

/// Active-set test for a branch minimizer using the values of the other
/// branches (`outcomes` keyed by sorted row positions).
pub fn verify_local(
    p: &BilevelProblem,
    supports: &[Vec<usize>],
    outcomes: &HashMap<Vec<usize>, &BranchOutcome>,
    own: &[usize],
    point: &[f64],
    t: usize,
    active_tol: f64,
) -> LocalMethod {
    let a = active_set(p, point, active_tol);
    let f = p.upper_obj.eval(point);
    let tol = 1e-6 * (1.0 + f.abs());
    if is_subset(&a, own) {
        return LocalMethod::ContainsActive;
    }
    if a.len() < t {
        let ok = supports.iter().filter(|j| is_subset(&a, j)).any(|j| {
            outcomes.get(j).and_then(|o| branch_value(o)).is_some_and(|v| f <= v + tol)
        });
        return if ok { LocalMethod::ContainsActive } else { LocalMethod::Uncertified };
    }
    let ok = supports.iter().filter(|j| is_subset(j, &a)).all(|j| {
        outcomes.get(j).and_then(|o| branch_value(o)).is_some_and(|v| f <= v + tol)
    });
    if ok {
        LocalMethod::ActiveSubsets
    } else {
        LocalMethod::Uncertified
    }
}

/// Result of the ball test around a point.
#[derive(Debug, Clone, Serialize)]
pub struct BallCheck {
    pub certified: bool,
    /// `(support labels, min F - F(point) over the piece in the ball)`;
    /// `None` marks an empty piece.
    pub values: Vec<(Vec<usize>, Option<f64>)>,
}

fn ball_value(p: &BilevelProblem, rows: &[usize], point: &[f64], rho: f64, cfg: &SolverConfig) -> Result<Option<Option<f64>>, BilevelError> {
    let plme = build_plme(p, rows)?;
    let ball = Ball { center: point.to_vec(), radius: rho };
    let sys = build_branch_system(p, &plme, &[], Some(&ball));
    let mut pop = branch_pop(p, &sys);
    let f0 = p.upper_obj.eval(point);
    pop.objective = &pop.objective - &Polynomial::constant(p.space, f0);
    let mut pcfg = cfg.pop_config();
    pcfg.ball = None;
    let r = solve_pop(&pop, &pcfg)?;
    Ok(match r.status {
        PopStatus::Infeasible => Some(None),
        PopStatus::Optimal => Some(Some(r.bound)),
        PopStatus::Stalled if r.bound.is_finite() => Some(Some(r.bound)),
        _ => None,
    })
}

/// Minimize `F - F(point)` over each relevant piece inside the ball of
/// radius `rho`: one retained support containing the active set if there
/// is one, otherwise every retained support inside it.
pub fn verify_local_ball(
    p: &BilevelProblem,
    supports: &[Vec<usize>],
    point: &[f64],
    rho: f64,
    cfg: &SolverConfig,
) -> Result<BallCheck, BilevelError> {
    let a = active_set(p, point, cfg.active_tol);
    let tol = cfg.eta_tol;
    let mut groups: Vec<Vec<&Vec<usize>>> = Vec::new();
    if let Some(j) = supports.iter().find(|j| is_subset(&a, j)) {
        groups.push(vec![j]);
    }
    let inside: Vec<&Vec<usize>> = supports.iter().filter(|j| is_subset(j, &a)).collect();
    if !inside.is_empty() {
        groups.push(inside);
    }
    let mut last = BallCheck { certified: false, values: Vec::new() };
    for g in groups {
        let mut values = Vec::new();
        let mut ok = true;
        for j in g {
            match ball_value(p, j, point, rho, cfg)? {
                Some(v) => {
                    if v.is_some_and(|v| v < -tol) {
                        ok = false;
                    }
                    values.push((p.labels(j), v));
                }
                None => {
                    ok = false;
                    values.push((p.labels(j), Some(f64::NEG_INFINITY)));
                }
            }
            if !ok {
                break;
            }
        }
        last = BallCheck { certified: ok, values };
        if ok {
            break;
        }
    }
    Ok(last)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Every branch settled and the best value is the global optimum.
    Global,
    /// Every branch is empty.
    Infeasible,
    /// Some branch did not settle; the reported value is an upper bound.
    Incomplete,
}

#[derive(Debug, Clone, Serialize)]
pub struct Minimizer {
    pub support: Vec<usize>,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GlobalReport {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub t: usize,
    pub eliminated: usize,
    pub verdict: Verdict,
    pub value: Option<f64>,
    pub lower_bound: Option<f64>,
    pub minimizers: Vec<Minimizer>,
    pub branches: Vec<BranchOutcome>,
    pub locals: Vec<LocalReport>,
}

fn run_branches(p: &BilevelProblem, supports: &[Vec<usize>], cfg: &SolverConfig) -> Result<Vec<BranchOutcome>, BilevelError> {
    let first: Vec<BranchOutcome> =
        supports.par_iter().map(|j| solve_branch_budget(p, j, cfg, cfg.screen_moments)).collect::<Result<_, _>>()?;
    let value = first.iter().filter_map(|b| b.value).min_by(f64::total_cmp);
    let revisit: Vec<usize> = (0..first.len()).filter(|&i| first[i].truncated && !dominated(value, &first[i])).collect();
    let again: Vec<BranchOutcome> = revisit.par_iter().map(|&i| solve_branch(p, &first[i].rows, cfg)).collect::<Result<_, _>>()?;
    let mut out = first;
    for (i, b) in revisit.into_iter().zip(again) {
        out[i] = b;
    }
    for b in out.iter_mut().filter(|b| b.truncated) {
        b.message = Some(format!("{}; larger orders skipped, bound dominated by the incumbent", b.message.as_deref().unwrap_or("stalled")));
    }
    Ok(out)
}

/// An unsettled branch whose relaxation bound already reaches the
/// incumbent cannot hold a better point.
fn dominated(value: Option<f64>, b: &BranchOutcome) -> bool {
    match (value, b.bound) {
        (Some(v), Some(lb)) => lb >= v - 1e-6 * (1.0 + v.abs()),
        _ => false,
    }
}

/// Solve the bilevel problem over all retained supports.
pub fn solve(original: &BilevelProblem, cfg: &SolverConfig) -> Result<GlobalReport, BilevelError> {
    let prep = Prepared::new(original)?;
    let p = &prep.problem;
    let stats = problem_stats(p, cfg.rank, cfg.seed, cfg.support_cap)?;
    if stats.t == 0 {
        return Err(BilevelError::ZeroRank);
    }
    let results = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BilevelError::Threads(e.to_string()))?
            .install(|| run_branches(p, &stats.supports, cfg)),
        None => run_branches(p, &stats.supports, cfg),
    };
    let mut branches = results?;
    let outcomes: HashMap<Vec<usize>, &BranchOutcome> = branches.iter().map(|b| (b.rows.clone(), b)).collect();
    let mut locals = Vec::new();
    for b in branches.iter().filter(|b| b.status == BranchStatus::Solved) {
        for w in &b.points {
            let mut method = verify_local(p, &stats.supports, &outcomes, &b.rows, w, stats.t, cfg.active_tol);
            if method == LocalMethod::Uncertified && cfg.rho > 0.0 {
                if let Ok(c) = verify_local_ball(p, &stats.supports, w, cfg.rho, cfg) {
                    if c.certified {
                        method = LocalMethod::Ball;
                    }
                }
            }
            locals.push(LocalReport {
                support: b.support.clone(),
                value: p.upper_obj.eval(w),
                point: prep.lift(w),
                active: p.labels(&active_set(p, w, cfg.active_tol)),
                method,
            });
        }
    }
    let value = branches.iter().filter_map(|b| b.value).min_by(f64::total_cmp);
    let complete = branches.iter().all(|b| b.status.is_final() || dominated(value, b));
    let lower_bound = branches
        .iter()
        .filter(|b| b.status != BranchStatus::Infeasible)
        .map(|b| b.value.or(b.bound).unwrap_or(f64::NEG_INFINITY))
        .min_by(f64::total_cmp)
        .filter(|v| v.is_finite());
    let mut minimizers = Vec::new();
    if let Some(v) = value {
        for b in branches.iter().filter(|b| b.value.is_some_and(|bv| bv <= v + 1e-6 * (1.0 + v.abs()))) {
            for w in &b.points {
                if p.upper_obj.eval(w) <= v + 1e-6 * (1.0 + v.abs()) {
                    minimizers.push(Minimizer { support: b.support.clone(), point: prep.lift(w) });
                }
            }
        }
    }
    let verdict = if !complete {
        Verdict::Incomplete
    } else if value.is_none() {
        Verdict::Infeasible
    } else {
        Verdict::Global
    };
    for b in &mut branches {
        b.points = b.points.iter().map(|w| prep.lift(w)).collect();
        for r in &mut b.log {
            if let (Some(w), Some(z)) = (&r.point, &r.z) {
                r.z = Some(prep.lift_lower(&w[..p.n()], z));
            }
            r.point = r.point.as_ref().map(|w| prep.lift(w));
        }
    }
    Ok(GlobalReport {
        n: original.n(),
        p: original.p(),
        m: original.m(),
        t: stats.t,
        eliminated: original.m() - p.m(),
        verdict,
        value,
        lower_bound,
        minimizers,
        branches,
        locals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_problem;

    const EX33: &str = "vars x 1 y 1\nupper.obj (x1 - 1.5)^2 + y1^2\nupper.ineq x1\nupper.ineq 2*y1 + 1\n\
        lower.obj (z1 - x1)^2\nlower.ineq z1 + 1\nlower.ineq 1 - z1\nlower.ineq 4 - 2*x1 - z1\nlower.ineq 3*x1 - 1 - z1\n";

    #[test]
    fn lower_check_finds_the_better_response() {
        let p = parse_problem(EX33).unwrap();
        let c = verify_lower(&p, &[1.0], &[0.0], &SolverConfig::default()).unwrap();
        assert!((c.eta + 1.0).abs() < 1e-6, "{c:?}");
        assert!((c.z.unwrap()[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn branches_of_the_one_dimensional_example() {
        let p = parse_problem(EX33).unwrap();
        let cfg = SolverConfig::default();
        let want = [1.125, 1.0, 0.2, 1.125];
        for (j, w) in want.iter().enumerate() {
            let o = solve_branch(&p, &[j], &cfg).unwrap();
            assert_eq!(o.status, BranchStatus::Solved, "{o:?}");
            assert!((o.value.unwrap() - w).abs() < 1e-4, "J={j}: {o:?}");
        }
    }

    #[test]
    fn global_solution_of_the_one_dimensional_example() {
        let p = parse_problem(EX33).unwrap();
        let r = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Global);
        assert!((r.value.unwrap() - 0.2).abs() < 1e-4);
        let m = &r.minimizers[0];
        assert!((m.point[0] - 1.9).abs() < 1e-3 && (m.point[1] - 0.2).abs() < 1e-3);
    }
}

//! Table and json rendering. Tables round to four decimals; json keeps full
//! precision.

use std::fmt::Write as _;

use serde_json::{json, Value};

use bpop_core::bilevel::{BranchOutcome, GlobalReport, Prepared};
use bpop_core::fe::{FeCheck, FeasibleExtension};
use bpop_core::model::BilevelProblem;
use bpop_core::plme::Plme;
use bpop_core::poly::Polynomial;

pub fn num(v: f64) -> String {
    if !v.is_finite() {
        return if v > 0.0 { "inf".into() } else if v < 0.0 { "-inf".into() } else { "nan".into() };
    }
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "-".into())
}

fn vec4(v: &[f64]) -> String {
    format!("({})", v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", "))
}

fn set(v: &[usize]) -> String {
    format!("{{{}}}", v.iter().map(usize::to_string).collect::<Vec<_>>().join(","))
}

fn xy(n: usize, w: &[f64]) -> String {
    format!("x={} y={}", vec4(&w[..n]), vec4(&w[n..]))
}

fn status_name<T: serde::Serialize>(s: &T) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

pub fn solve_json(name: &str, rep: &GlobalReport, timings: bool) -> Value {
    let mut v = serde_json::to_value(rep).expect("report serializes");
    if timings {
        if let Some(bs) = v.get_mut("branches").and_then(Value::as_array_mut) {
            for (b, o) in bs.iter_mut().zip(&rep.branches) {
                b["seconds"] = json!(o.seconds);
            }
        }
    }
    let mut doc = json!({"schema": 1, "problem": name});
    doc.as_object_mut().unwrap().extend(v.as_object().unwrap().clone());
    doc
}

pub fn solve_table(name: &str, p: &BilevelProblem, rep: &GlobalReport) -> String {
    let n = p.n();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "problem {name}: n={} p={} m={} t={} branches={}{}",
        rep.n,
        rep.p,
        rep.m,
        rep.t,
        rep.branches.len(),
        if rep.eliminated > 0 { format!(" (eliminated {} equalities)", rep.eliminated) } else { String::new() }
    );
    let _ = writeln!(s, "{:<16} {:<15} {:>12} {:>5}  point", "J", "status", "value", "iter");
    for b in &rep.branches {
        let point = b.points.first().map(|w| xy(n, w)).unwrap_or_default();
        let value = if b.value.is_some() { opt(b.value) } else { b.bound.filter(|v| v.is_finite()).map(|v| format!(">={}", num(v))).unwrap_or("-".into()) };
        let _ = writeln!(s, "{:<16} {:<15} {:>12} {:>5}  {}", set(&b.support), status_name(&b.status), value, b.iterations, point);
    }
    match rep.value {
        Some(v) => {
            let _ = writeln!(s, "F_min {} [{}]", num(v), status_name(&rep.verdict));
            for m in &rep.minimizers {
                let _ = writeln!(s, "  J={} {}", set(&m.support), xy(n, &m.point));
            }
        }
        None => {
            let _ = writeln!(s, "no feasible point [{}]", status_name(&rep.verdict));
        }
    }
    if let Some(lb) = rep.lower_bound {
        if rep.value.is_none_or(|v| (v - lb).abs() > 1e-6 * (1.0 + v.abs())) {
            let _ = writeln!(s, "lower bound {}", num(lb));
        }
    }
    if !rep.locals.is_empty() {
        let _ = writeln!(s, "local minimizers:");
        for l in &rep.locals {
            let _ = writeln!(
                s,
                "  {:>12}  J={:<12} A={:<12} {:<16} {}",
                num(l.value),
                set(&l.support),
                set(&l.active),
                status_name(&l.method),
                xy(n, &l.point)
            );
        }
    }
    s
}

pub fn branch_json(name: &str, prep: &Prepared, out: &BranchOutcome, timings: bool) -> Value {
    let mut o = out.clone();
    lift_outcome(prep, &mut o);
    let mut v = serde_json::to_value(&o).expect("outcome serializes");
    if timings {
        v["seconds"] = json!(out.seconds);
    }
    let mut doc = json!({"schema": 1, "problem": name});
    doc.as_object_mut().unwrap().extend(v.as_object().unwrap().clone());
    doc
}

fn lift_outcome(prep: &Prepared, o: &mut BranchOutcome) {
    let n = prep.problem.n();
    o.points = o.points.iter().map(|w| prep.lift(w)).collect();
    for r in &mut o.log {
        if let (Some(w), Some(z)) = (&r.point, &r.z) {
            r.z = Some(prep.lift_lower(&w[..n], z));
        }
        r.point = r.point.as_ref().map(|w| prep.lift(w));
    }
}

pub fn branch_table(name: &str, prep: &Prepared, out: &BranchOutcome) -> String {
    let mut o = out.clone();
    lift_outcome(prep, &mut o);
    let n = prep.problem.n();
    let mut s = String::new();
    let _ = writeln!(s, "problem {name}: branch J={}", set(&o.support));
    let _ = writeln!(s, "{:>2}  {:<40} {:>12}  {:<24} q", "k", "(x, y)", "eta", "z");
    for r in &o.log {
        let pt = match &r.point {
            Some(w) => xy(n, w),
            None => status_name(&r.status),
        };
        let z = r.z.as_ref().map(|z| vec4(z)).unwrap_or_default();
        let q = if r.q.is_empty() { String::new() } else { format!("({})", r.q.join(", ")) };
        let _ = writeln!(s, "{:>2}  {:<40} {:>12}  {:<24} {}", r.k, pt, r.eta.map(|e| format!("{e:.4e}")).unwrap_or("-".into()), z, q);
    }
    let _ = writeln!(s, "status {} value {}{}", status_name(&o.status), opt(o.value), o.message.as_ref().map(|m| format!(" ({m})")).unwrap_or_default());
    s
}

fn lambda_strings(pl: &Plme) -> (Vec<String>, String) {
    match pl.d.constant_value() {
        Some(d) if d != 0.0 => (pl.phi.iter().map(|f| f.scale(1.0 / d).chop(1e-12).to_string()).collect(), "1".into()),
        _ => (pl.phi.iter().map(Polynomial::to_string).collect(), pl.d.to_string()),
    }
}

pub fn plme_json(name: &str, t: usize, items: &[(Vec<usize>, Plme)]) -> Value {
    let rows: Vec<Value> = items
        .iter()
        .map(|(l, pl)| {
            let (lam, den) = lambda_strings(pl);
            json!({
                "support": l,
                "phi": pl.phi.iter().map(Polynomial::to_string).collect::<Vec<_>>(),
                "d": pl.d.to_string(),
                "lambda": lam,
                "lambda_den": den,
            })
        })
        .collect();
    json!({"schema": 1, "problem": name, "t": t, "plme": rows})
}

pub fn plme_table(name: &str, t: usize, items: &[(Vec<usize>, Plme)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "problem {name}: t={t} supports={}", items.len());
    for (l, pl) in items {
        let (lam, den) = lambda_strings(pl);
        if den == "1" {
            let _ = writeln!(s, "J={:<12} lambda = ({})", set(l), lam.join(", "));
        } else {
            let _ = writeln!(s, "J={:<12} lambda = ({}) / ({den})", set(l), lam.join(", "));
        }
    }
    s
}

pub fn fe_json(name: &str, fe: &FeasibleExtension, chk: &FeCheck) -> Value {
    json!({
        "schema": 1,
        "problem": name,
        "kind": fe.kind,
        "q": fe.q.iter().map(Polynomial::to_string).collect::<Vec<_>>(),
        "check": chk,
    })
}

pub fn fe_table(name: &str, fe: &FeasibleExtension, chk: &FeCheck) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "problem {name}: {} extension", status_name(&fe.kind));
    for (i, q) in fe.q.iter().enumerate() {
        let _ = writeln!(s, "  q{} = {q}", i + 1);
    }
    let _ = writeln!(
        s,
        "check {}: interpolation {:.1e}, identity {:.1e}, sign {:.1e}, sampled {:.1e} over {} points",
        if chk.pass { "passed" } else { "failed" },
        chk.interpolation,
        chk.identity,
        chk.sign.max(0.0),
        chk.sampled,
        chk.samples
    );
    s
}

pub struct LocalDoc {
    pub problem: String,
    pub point: Vec<f64>,
    pub verdict: &'static str,
    pub eta: Option<f64>,
    pub values: Vec<(Vec<usize>, Option<f64>)>,
}

impl LocalDoc {
    pub fn json(&self) -> Value {
        let vals: Vec<Value> = self.values.iter().map(|(l, v)| json!({"support": l, "value": v})).collect();
        json!({"schema": 1, "problem": self.problem, "point": self.point, "verdict": self.verdict, "eta": self.eta, "pieces": vals})
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "problem {}: point {}", self.problem, vec4(&self.point));
        if let Some(e) = self.eta {
            let _ = writeln!(s, "eta {e:.4e}");
        }
        for (l, v) in &self.values {
            let _ = writeln!(s, "  J={:<12} {}", set(l), v.map(num).unwrap_or_else(|| "empty".into()));
        }
        let _ = writeln!(s, "{}", self.verdict);
        s
    }
}

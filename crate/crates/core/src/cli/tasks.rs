//! Execution of single configured tasks.

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Objects, Suite, Task, TaskOp};
use crate::asymptotics::{classify, Policy, SeminormReport};
use crate::error::{Error, Result};
use crate::exponential::{
    check_log_scale, exp_with, is_symmetric, oracle_agreement, random_probe_pairs, verify_commutes, verify_derivative,
    verify_semigroup, verify_unitary, ExpMode, ExpOptions, ExpSettings, DEFAULT_STEPS,
};
use crate::functions::C64;
use crate::genfunc::{seminorm_pkl_adaptive, RepNet};
use crate::kernel_ops::{apply, check_properly_supported, compose, iterate, test_zero_operator, KernelNet};
use crate::mollifier::scarp_moment_reports;
use crate::quadrature::{AxisBox, Rule};
use crate::report::{csv_table, fmt_f64, Verdict};

/// Sample points per axis in the samples CSV.
const SAMPLES_PER_AXIS: usize = 9;

pub struct TaskOutcome {
    pub pass: bool,
    pub result: Value,
    pub samples_csv: String,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// JSON numbers cannot hold infinities; those become `"-inf"` / `"inf"` / `"nan"`.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(format!("{v}"))
    }
}

fn growth(rep: &SeminormReport, policy: &Policy) -> Value {
    json!({
        "class": classify(rep, policy.m_max, policy.slope_tol).label(),
        "fitted_slope": num(rep.fitted_slope),
        "fit_r2": rep.fit_r2,
        "epsilons": rep.epsilons,
        "values": rep.values,
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// `epsilon, x1..xd, re, im` on an evenly spaced grid of the net's domain.
fn net_samples(u: &RepNet, policy: &Policy) -> String {
    let axes: Vec<Vec<f64>> = u.domain.axes.iter().map(|&(a, b)| linspace(a, b, SAMPLES_PER_AXIS)).collect();
    let mut points: Vec<Vec<f64>> = vec![vec![]];
    for ax in &axes {
        points = points.iter().flat_map(|p| ax.iter().map(move |&x| [p.as_slice(), &[x]].concat())).collect();
    }
    let xs: Vec<String> = (1..=u.dim()).map(|i| format!("x{i}")).collect();
    let mut header = vec!["epsilon"];
    header.extend(xs.iter().map(String::as_str));
    header.extend(["re", "im"]);
    let mut rows = Vec::new();
    for e in policy.schedule.iter() {
        for p in &points {
            let v = u.eval(e, p);
            let mut row = vec![fmt_f64(e)];
            row.extend(p.iter().map(|&x| fmt_f64(x)));
            row.extend([fmt_f64(v.re), fmt_f64(v.im)]);
            rows.push(row);
        }
    }
    csv_table(&header, &rows)
}

fn net_outcome(u: &RepNet, extra: Value, policy: &Policy) -> Result<TaskOutcome> {
    let rep = seminorm_pkl_adaptive(u, &u.domain, 0, Rule::new(4, 4), policy)?;
    let mut result = json!({ "label": u.label, "dim": u.dim(), "sup_norm": growth(&rep, policy) });
    if let (Value::Object(r), Value::Object(e)) = (&mut result, extra) {
        r.extend(e);
    }
    Ok(TaskOutcome { pass: true, result, samples_csv: net_samples(u, policy) })
}

fn settings(objs: &Objects, mode: ExpMode, proceed: bool) -> Result<ExpSettings> {
    let cfg = objs.cfg;
    Ok(ExpSettings {
        mode,
        options: ExpOptions {
            series_tol: cfg.tolerances.series_tol,
            proceed_if_not_log_scale: proceed,
            ..ExpOptions::default()
        },
        policy: cfg.policy()?,
    })
}

fn kernel_box(h: &KernelNet) -> AxisBox {
    h.x_domain().product(&h.y_domain())
}

/// Small boxes at the quarter points of the x-domain.
fn support_probes(h: &KernelNet) -> Vec<AxisBox> {
    let d = h.x_domain();
    [0.25, 0.5, 0.75]
        .iter()
        .map(|&s| {
            let axes = d.axes.iter().map(|&(a, b)| {
                let (c, r) = (a + s * (b - a), 0.05 * (b - a));
                (c - r, c + r)
            });
            AxisBox { axes: axes.collect() }
        })
        .collect()
}

fn verify(objs: &mut Objects, suite: Suite, kernel: &str, t: f64, probes: usize) -> Result<TaskOutcome> {
    let h = objs.kernel(kernel)?;
    let policy = objs.cfg.policy()?;
    let (pass, result) = match suite {
        Suite::Exponential => {
            let s = settings(objs, ExpMode::CompactSup, false)?;
            let tc = C64::new(t, 0.0);
            let mut reports = vec![verify_semigroup(&h, tc, tc, &s)?];
            let deriv = verify_derivative(&h, t, &DEFAULT_STEPS, &s)?;
            reports.push(verify_commutes(&h, tc, &s)?);
            reports.push(oracle_agreement(&exp_with(&h, tc, &s)?)?);
            if is_symmetric(&h, &policy)?.passed() {
                let pairs = random_probe_pairs(&h, probes, objs.cfg.seed)?;
                reports.push(verify_unitary(&h, t, &pairs, &s)?);
            }
            let pass = deriv.verdict == Verdict::Pass && reports.iter().all(|r| r.passed());
            (pass, json!({ "identities": to_value(&reports), "derivative": to_value(&deriv) }))
        }
        Suite::Zero => {
            let v = test_zero_operator(&h, None, &h.x_domain(), policy.m_max, &policy)?;
            (v.consistent_with_zero, json!({ "verdict": v.label(), "report": to_value(&v) }))
        }
        Suite::LogScale => {
            let l_max = h.base.deriv_order.min(2);
            let r = check_log_scale(&h, &kernel_box(&h), l_max, ExpMode::CompactSup, &policy)?;
            (r.pass, to_value(&r))
        }
        Suite::Support => {
            let r = check_properly_supported(&h, &support_probes(&h), &policy)?;
            (r.pass, to_value(&r))
        }
    };
    let result = json!({ "suite": suite, "kernel": kernel, "result": result });
    Ok(TaskOutcome { pass, result, samples_csv: net_samples(&h.base, &policy) })
}

pub fn run_task(objs: &mut Objects, task: &Task) -> Result<TaskOutcome> {
    let policy = objs.cfg.policy()?;
    match &task.op {
        TaskOp::Moments { m_max, min_decay } => {
            if *m_max == 0 {
                return Err(Error::Config(format!("task {}: m_max must be at least 1", task.name)));
            }
            let reps = scarp_moment_reports(objs.kit()?, &policy, *m_max as usize - 1)?;
            let mut rows = Vec::new();
            let mut csv = Vec::new();
            for (m, r) in reps.iter().enumerate() {
                let ok = r.vanishes || r.fitted_slope <= -min_decay + policy.slope_tol;
                rows.push(json!({ "m": m, "fitted_slope": num(r.fitted_slope), "fit_r2": r.fit_r2, "vanishes": r.vanishes, "pass": ok }));
                for (e, v) in r.epsilons.iter().zip(&r.values) {
                    csv.push(vec![fmt_f64(*e), m.to_string(), fmt_f64(*v)]);
                }
            }
            let pass = rows.iter().all(|r| r["pass"] == true);
            let result = json!({ "min_decay": min_decay, "rows": rows });
            Ok(TaskOutcome { pass, result, samples_csv: csv_table(&["epsilon", "m", "value"], &csv) })
        }
        TaskOp::Embed { function } => {
            let f = objs.function(function)?;
            net_outcome(&f, json!({ "function": function }), &policy)
        }
        TaskOp::Apply { kernel, function } => {
            let h = objs.kernel(kernel)?;
            let f = objs.function(function)?;
            let u = apply(&h, &f)?;
            net_outcome(&u, json!({ "kernel": kernel, "function": function }), &policy)
        }
        TaskOp::Compose { left, right } => {
            let (a, b) = (objs.kernel(left)?, objs.kernel(right)?);
            let k = compose(&a, &b)?;
            net_outcome(&k.base, json!({ "left": left, "right": right }), &policy)
        }
        TaskOp::Power { kernel, n } => {
            let k = iterate(&objs.kernel(kernel)?, *n)?;
            net_outcome(&k.base, json!({ "kernel": kernel, "n": n }), &policy)
        }
        TaskOp::Exp { kernel, t, mode, proceed } => {
            let h = objs.kernel(kernel)?;
            let s = settings(objs, *mode, *proceed)?;
            let res = exp_with(&h, C64::new(t.0, t.1), &s)?;
            let oracle = oracle_agreement(&res)?;
            let mut out = net_outcome(
                &res.s.base,
                json!({
                    "kernel": kernel,
                    "t": [t.0, t.1],
                    "mode": res.mode,
                    "series_tol": res.series_tol,
                    "epsilons": res.epsilons,
                    "terms_used": res.terms_used,
                    "tail_bound": res.tail_bound,
                    "log_scale": to_value(&res.log_scale),
                    "oracle": to_value(&oracle),
                }),
                &policy,
            )?;
            out.pass = oracle.passed();
            Ok(out)
        }
        TaskOp::Verify { suite, kernel, t, probes } => verify(objs, *suite, kernel, *t, *probes),
    }
}

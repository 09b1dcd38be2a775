use std::process::ExitCode;
use std::time::{Duration, Instant};

use mshlab_cli::config::*;
use mshlab_cli::experiments::{fd_convergence_ratios, minors_vs_eigen, pole_maximality};
use mshlab_cli::report::RunReport;
use mshlab_cli::run::execute;

struct Outcome {
    ok: bool,
    detail: String,
}

fn run(exp: Experiment, threads: Option<usize>) -> RunReport {
    let mut cfg = RunConfig::new(exp);
    cfg.threads = threads;
    execute(&cfg).0
}

fn exp(kind: &str) -> Experiment {
    Experiment::default_for(kind).expect("known kind")
}

// Every record whose name contains `pat` passed, and there was at least one.
fn records_pass(report: &RunReport, pat: &str) -> Outcome {
    let sel: Vec<_> = report.records.iter().filter(|r| r.name.contains(pat)).collect();
    let failed: Vec<_> = sel.iter().filter(|r| !r.passed).map(|r| format!("{} measured {}", r.name, r.measured)).collect();
    Outcome {
        ok: !sel.is_empty() && failed.is_empty(),
        detail: if sel.is_empty() { format!("no '{}' records", pat) } else if failed.is_empty() { format!("{} '{}' checks", sel.len(), pat) } else { failed.join("; ") },
    }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    Outcome { ok: parts.iter().all(|o| o.ok), detail: parts.into_iter().map(|o| o.detail).collect::<Vec<_>>().join(", ") }
}

fn c1() -> Outcome {
    let pairs = [(1, 1), (2, 1), (2, 2), (3, 2), (4, 3)];
    let mut worst = 0.0f64;
    for (k, m) in pairs {
        match pole_maximality(k, m, 0.5, 50) {
            Ok(w) => worst = worst.max(w),
            Err(e) => return Outcome { ok: false, detail: format!("k={} m={}: {}", k, m, e) },
        }
    }
    Outcome { ok: worst < 1e-10, detail: format!("max |sigma_m|/lambda^m = {:.2e} over 5 pairs x 50 radii", worst) }
}

fn c2() -> Outcome {
    let r = run(exp("verify-weights"), None);
    records_pass(&r, "subweight")
}

fn c3() -> Outcome {
    let r = run(exp("verify-weights"), None);
    records_pass(&r, "superweight")
}

fn c4() -> Outcome {
    let r = run(exp("expansion"), None);
    records_pass(&r, "expansion")
}

fn c5() -> Outcome {
    let r = run(exp("lelong"), None);
    all(vec![records_pass(&r, "nu(gamma"), records_pass(&r, "sublevel vs tube")])
}

fn c6() -> Outcome {
    let r = run(exp("reltype"), None);
    all(vec![records_pass(&r, "convexity"), records_pass(&r, "slope")])
}

fn c7() -> Outcome {
    let r = run(exp("localize"), None);
    all(vec![
        records_pass(&r, "construction"),
        records_pass(&r, " type"),
        records_pass(&r, " lelong"),
        records_pass(&r, "pointwise"),
        records_pass(&r, "min-relation"),
    ])
}

fn c8() -> Outcome {
    let r = run(exp("siu"), None);
    all(vec![records_pass(&r, "siu gamma"), records_pass(&r, "siu falsifier")])
}

fn c9() -> Outcome {
    let r = run(exp("minimal"), None);
    records_pass(&r, "minimal")
}

fn c10() -> Outcome {
    let mut parts = Vec::new();
    let steps = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
    let mut ratios = Vec::new();
    for (k, m) in [(1, 1), (2, 1), (3, 2), (4, 3)] {
        match fd_convergence_ratios(k, m, 0.1, &steps, 7) {
            Ok(v) => ratios.extend(v),
            Err(e) => parts.push(Outcome { ok: false, detail: e.to_string() }),
        }
    }
    let fd_ok = !ratios.is_empty() && ratios.iter().all(|q| (3.5..=4.5).contains(q));
    parts.push(Outcome { ok: fd_ok, detail: format!("fd ratios in [{:.3}, {:.3}]", ratios.iter().cloned().fold(f64::INFINITY, f64::min), ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)) });
    match minors_vs_eigen(200, 11) {
        Ok(d) => parts.push(Outcome { ok: d < 1e-10, detail: format!("minors vs eigen {:.1e}", d) }),
        Err(e) => parts.push(Outcome { ok: false, detail: e.to_string() }),
    }
    let mut mc = Lelong { method: SeriesMethod::MonteCarlo, ..Default::default() };
    mc.pairs.truncate(2);
    for (label, e) in [("localize", exp("localize")), ("lelong-mc", Experiment::Lelong(mc))] {
        let base = run(e.clone(), Some(1)).canonical_json();
        let same = [Some(2), Some(4)].iter().all(|t| run(e.clone(), *t).canonical_json() == base);
        parts.push(Outcome { ok: same, detail: format!("{} identical across 1/2/4 threads: {}", label, same) });
    }
    all(parts)
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 10] = [
        (1, "pole is maximal", Duration::from_secs(1), c1),
        (2, "subweights certified with leading expansion", Duration::from_secs(10), c2),
        (3, "superweights have the required signs", Duration::from_secs(10), c3),
        (4, "perturbed expansions exceed delta", Duration::from_secs(10), c4),
        (5, "Lelong numbers of pole multiples", Duration::from_secs(30), c5),
        (6, "relative type of pole multiples", Duration::from_secs(30), c6),
        (7, "localized weights", Duration::from_secs(120), c7),
        (8, "constancy along V and falsifier", Duration::from_secs(60), c8),
        (9, "minimal weights", Duration::from_secs(1), c9),
        (10, "numerics and determinism", Duration::from_secs(120), c10),
    ];
    let mut failed = 0;
    for (n, label, limit, f) in criteria {
        let t0 = Instant::now();
        let out = f();
        let dt = t0.elapsed();
        let ok = out.ok && dt <= limit;
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {}: {} ({}; {:.2} s, limit {} s)",
            if ok { "PASS" } else { "FAIL" },
            n,
            label,
            out.detail,
            dt.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {}/10 criteria passed", 10 - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

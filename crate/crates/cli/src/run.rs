use std::fs;
use std::io;
use std::path::PathBuf;
use std::time::Instant;

use mshlab::exec::with_threads;

use crate::config::RunConfig;
use crate::experiments::{self, Artifact, Context};
use crate::report::RunReport;

/// Run the configured experiment on the configured thread pool.
pub fn execute(cfg: &RunConfig) -> (RunReport, Vec<Artifact>) {
    let t0 = Instant::now();
    let (records, artifacts) = with_threads(cfg.threads, || {
        let mut ctx = Context::new(&cfg.model, cfg.seed);
        experiments::run(&cfg.experiment, &mut ctx);
        (ctx.rec.records, ctx.artifacts)
    });
    let report = RunReport::new(cfg.experiment.kind(), cfg.hash(), cfg.seed, records, t0.elapsed().as_secs_f64() * 1e3);
    (report, artifacts)
}

/// Write config, report and artifacts into the run directory.
pub fn write_outputs(cfg: &RunConfig, report: &RunReport, artifacts: &[Artifact]) -> io::Result<PathBuf> {
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), cfg.to_json())?;
    let fmt = cfg.output.format;
    if fmt.json() {
        fs::write(dir.join("report.json"), report.to_json())?;
    }
    if fmt.csv() {
        let csv = report.to_csv().map_err(io::Error::other)?;
        fs::write(dir.join("report.csv"), csv)?;
    }
    let art = dir.join("artifacts");
    for a in artifacts {
        let is_csv = a.name.ends_with(".csv");
        if (is_csv && !fmt.csv()) || (!is_csv && !fmt.json()) {
            continue;
        }
        let path = art.join(&a.name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, &a.contents)?;
    }
    Ok(dir)
}

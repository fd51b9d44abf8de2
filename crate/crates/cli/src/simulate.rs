//! `simulate`: scenario (or batch) → waveforms.csv + manifest.json.
//!
//! A batch file holds `[[run]]` tables with `name`, `scenario` (path relative
//! to the batch file) and an optional `overrides` table of dotted keys. Runs
//! execute concurrently; outputs land in `<out>/<name>/`. Nothing is written
//! unless every run succeeds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use transient_bench_core::scenarios::{
    build, parse_scenario_with_overrides, serialize_scenario, ScenarioConfig,
};
use transient_bench_core::{solver, WaveformSet};

use crate::waveform_csv;
use crate::{CliError, CliResult};

pub const THREADS_ENV: &str = "TRANSIENT_BENCH_THREADS";
pub const WAVEFORMS_FILE: &str = "waveforms.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESOLVED_FILE: &str = "resolved.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub config_sha256: String,
    pub dt_s: f64,
    pub t_end_s: f64,
    pub event_time_s: f64,
    pub samples: usize,
    pub probes: Vec<String>,
    pub outputs: Outputs,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub waveforms: String,
    pub resolved_config: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchFile {
    run: Vec<BatchRun>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchRun {
    name: String,
    scenario: PathBuf,
    #[serde(default)]
    overrides: toml::Table,
}

struct Job {
    /// Output subdirectory; `None` for a single scenario.
    name: Option<String>,
    source: PathBuf,
    config: ScenarioConfig,
}

struct Finished {
    job: Job,
    waveforms: WaveformSet,
    event_time: f64,
    wall_clock_s: f64,
}

/// Canonical digest of a resolved configuration.
pub fn config_digest(cfg: &ScenarioConfig) -> String {
    hex::encode(Sha256::digest(serialize_scenario(cfg).as_bytes()))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn located(path: &Path, e: transient_bench_core::Error) -> CliError {
    let mut err = CliError::from(e);
    err.message = format!("{}: {}", path.display(), err.message);
    err
}

/// Flattens a nested override table into dotted `key=value` pairs.
fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.to_string())),
        }
    }
}

fn jobs(path: &Path, overrides: &[(String, String)]) -> CliResult<Vec<Job>> {
    let text = read(path)?;
    let is_batch = text
        .parse::<toml::Table>()
        .map(|t| t.contains_key("run"))
        .unwrap_or(false);
    if !is_batch {
        let config =
            parse_scenario_with_overrides(&text, overrides).map_err(|e| located(path, e))?;
        return Ok(vec![Job {
            name: None,
            source: path.to_path_buf(),
            config,
        }]);
    }

    let batch: BatchFile = toml::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message())))?;
    if batch.run.is_empty() {
        return Err(CliError::usage(format!(
            "{}: batch has no runs",
            path.display()
        )));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::with_capacity(batch.run.len());
    for run in batch.run {
        let valid = !run.name.is_empty()
            && run
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
            && run.name != "."
            && run.name != "..";
        if !valid {
            return Err(CliError::usage(format!(
                "batch run name `{}` is not a plain file name",
                run.name
            )));
        }
        if out
            .iter()
            .any(|j: &Job| j.name.as_deref() == Some(run.name.as_str()))
        {
            return Err(CliError::usage(format!(
                "duplicate batch run name `{}`",
                run.name
            )));
        }
        let source = base.join(&run.scenario);
        let mut pairs = Vec::new();
        flatten("", &run.overrides, &mut pairs);
        pairs.extend_from_slice(overrides);
        let config = parse_scenario_with_overrides(&read(&source)?, &pairs)
            .map_err(|e| located(&source, e))?;
        out.push(Job {
            name: Some(run.name),
            source,
            config,
        });
    }
    Ok(out)
}

fn run_job(job: Job) -> CliResult<Finished> {
    let start = Instant::now();
    let built = build(&job.config).map_err(|e| located(&job.source, e))?;
    let waveforms =
        solver::run(&built.circuit, built.dt, built.t_end).map_err(|e| located(&job.source, e))?;
    Ok(Finished {
        job,
        waveforms,
        event_time: built.event_time,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

fn thread_count() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| {
                CliError::usage(format!("{THREADS_ENV}=`{v}` is not a positive integer"))
            }),
    }
}

/// Writes `bytes` next to `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("partial");
    let io = |e: std::io::Error| CliError::io(format!("cannot write {}: {e}", path.display()));
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn write_outputs(done: &Finished, dir: &Path) -> CliResult<Manifest> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    let cfg = &done.job.config;
    let waveforms = dir.join(WAVEFORMS_FILE);
    let resolved = dir.join(RESOLVED_FILE);
    let manifest = Manifest {
        scenario: done.job.source.display().to_string(),
        config_sha256: config_digest(cfg),
        dt_s: cfg.sim.dt_s,
        t_end_s: cfg.sim.t_end_s,
        event_time_s: done.event_time,
        samples: done.waveforms.len(),
        probes: done.waveforms.names().to_vec(),
        outputs: Outputs {
            waveforms: waveforms.display().to_string(),
            resolved_config: resolved.display().to_string(),
        },
        wall_clock_s: done.wall_clock_s,
    };
    write_atomic(&waveforms, &waveform_csv::to_bytes(&done.waveforms))?;
    write_atomic(&resolved, serialize_scenario(cfg).as_bytes())?;
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    write_atomic(&dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

pub fn simulate(
    scenario: &Path,
    out_dir: &Path,
    overrides: &[(String, String)],
    out: &mut dyn Write,
) -> CliResult<()> {
    let jobs = jobs(scenario, overrides)?;
    let threads = thread_count()?;
    let results: Vec<CliResult<Finished>> = if jobs.len() == 1 {
        jobs.into_iter().map(run_job).collect()
    } else {
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            pool = pool.num_threads(n);
        }
        let pool = pool
            .build()
            .map_err(|e| CliError::io(format!("cannot start worker threads: {e}")))?;
        pool.install(|| jobs.into_par_iter().map(run_job).collect())
    };
    let finished = results.into_iter().collect::<CliResult<Vec<_>>>()?;

    for done in &finished {
        let dir = match &done.job.name {
            Some(name) => out_dir.join(name),
            None => out_dir.to_path_buf(),
        };
        let m = write_outputs(done, &dir)?;
        let label = match &done.job.name {
            Some(name) => format!("{name} ({})", m.scenario),
            None => m.scenario.clone(),
        };
        writeln!(
            out,
            "{label}: {} samples x {} probes, dt {:e} s, t_end {} s, {:.2} s wall clock -> {}",
            m.samples,
            m.probes.len(),
            m.dt_s,
            m.t_end_s,
            m.wall_clock_s,
            m.outputs.waveforms
        )
        .map_err(|e| CliError::io(e.to_string()))?;
    }
    Ok(())
}

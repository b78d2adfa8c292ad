use std::collections::BTreeMap;
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodSpec, ProposerSpec, ReferenceSpec};
use super::plot::plot_convergence;
use super::summary::{summarize, Summary};
use super::velocity::{velocity_sweep, VelocitySweep};
use super::{HarnessError, EXIT_ABORTED, EXIT_OK};
use crate::baselines::{random_fill, run_bayesopt, run_cmaes, run_random};
use crate::calib::{calibrate, run_calibration, CalibError, CalibOptions, EvalTracker, Method, RunRecord, Timing};
use crate::error::IoError;
use crate::objective::reference::ReferenceSet;
use crate::objective::{Evaluator, SwimObjective};
use crate::proposer::{GroundTruthOracle, Proposer, RemoteConfig, RemoteProposer, SpsaOracle};
use crate::swimsim::SwimmerModel;

/// Run stems in execution order, so re-summarizing keeps method order.
pub const RUN_INDEX_FILE: &str = "index.json";

/// Non-reproducible run metadata, kept apart from the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub started_unix_s: u64,
    pub host: String,
    pub workers: usize,
    pub wall_s: f64,
    pub timing: BTreeMap<String, Timing>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub records: Vec<RunRecord>,
    pub summary: Summary,
    pub velocity: VelocitySweep,
    pub sidecar: Sidecar,
}

impl ExperimentOutcome {
    pub fn aborted(&self) -> Vec<String> {
        self.records.iter().filter(|r| r.aborted.is_some()).map(RunRecord::stem).collect()
    }

    pub fn exit_code(&self) -> i32 {
        if self.aborted().is_empty() {
            EXIT_OK
        } else {
            EXIT_ABORTED
        }
    }
}

pub fn build_reference(cfg: &ExperimentConfig, model: &SwimmerModel) -> Result<ReferenceSet, HarnessError> {
    let r = match &cfg.reference {
        ReferenceSpec::Synthetic {
            hidden_seed,
            noise_sigma,
            noise_seed,
        } => {
            ReferenceSet::synthetic_hidden(*hidden_seed, &cfg.frequencies, *noise_sigma, *noise_seed, &cfg.sim, model)?
        }
        ReferenceSpec::SyntheticTheta {
            theta_star,
            noise_sigma,
            noise_seed,
        } => ReferenceSet::synthetic(theta_star, &cfg.frequencies, *noise_sigma, *noise_seed, &cfg.sim, model)?,
        ReferenceSpec::Directory { path } => ReferenceSet::read_dir(path, &cfg.sim)?,
    };
    Ok(r)
}

fn authority(endpoint: &str) -> Result<String, HarnessError> {
    let rest = if let Some(r) = endpoint.strip_prefix("http://") {
        r
    } else if endpoint.starts_with("https://") {
        return Err(HarnessError::Config(format!("{endpoint}: only plain http endpoints are supported")));
    } else {
        return Err(HarnessError::Config(format!("{endpoint}: endpoint must start with http://")));
    };
    let host = rest.split('/').next().unwrap_or_default();
    if host.is_empty() {
        return Err(HarnessError::Config(format!("{endpoint}: missing host")));
    }
    Ok(if host.rsplit_once(':').is_some_and(|(_, p)| p.parse::<u16>().is_ok()) {
        host.to_string()
    } else {
        format!("{host}:80")
    })
}

/// Checks that every remote proposer endpoint accepts TCP connections.
pub fn preflight(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    for m in cfg.methods.iter().filter(|m| m.method.uses_proposer()) {
        if let Some(ProposerSpec::Remote(rc)) = cfg.proposer_for(m) {
            let auth = authority(&rc.endpoint)?;
            let wait = Duration::from_secs_f64(rc.timeout_secs.clamp(0.1, 5.0));
            let addrs: Vec<_> = auth
                .to_socket_addrs()
                .map_err(|e| HarnessError::ProposerUnreachable(format!("{}: {e}", rc.endpoint)))?
                .collect();
            if !addrs.iter().any(|a| TcpStream::connect_timeout(a, wait).is_ok()) {
                return Err(HarnessError::ProposerUnreachable(rc.endpoint.clone()));
            }
        }
    }
    Ok(())
}

fn make_proposer<'a>(
    spec: &ProposerSpec,
    objective: &'a SwimObjective,
    seed: u64,
) -> Result<Box<dyn Proposer + 'a>, HarnessError> {
    Ok(match spec {
        ProposerSpec::Oracle { gamma, sigma_dir } => {
            let theta_star = objective.reference().theta_star().ok_or_else(|| {
                HarnessError::Config("the oracle proposer needs a synthetic reference with known parameters".into())
            })?;
            Box::new(GroundTruthOracle::new(
                theta_star.clone(),
                objective.bounds().clone(),
                *gamma,
                *sigma_dir,
                seed,
            ))
        }
        ProposerSpec::Spsa { perturbation, gamma } => Box::new(SpsaOracle::new(objective, *perturbation, *gamma, seed)),
        ProposerSpec::Remote(rc) => Box::new(RemoteProposer::new(RemoteConfig::clone(rc))),
    })
}

/// Runs one (method, seed) cell against `objective`.
pub fn run_method(
    cfg: &ExperimentConfig,
    spec: &MethodSpec,
    objective: &SwimObjective,
    seed: u64,
) -> Result<RunRecord, HarnessError> {
    let run = format!("{}_seed{seed}", spec.name());
    let wrap = |source: CalibError| HarnessError::Calib {
        run: run.clone(),
        source,
    };
    let budget = cfg.budget;
    let mut record = match spec.method {
        Method::Random => run_random(objective, budget, seed).map_err(wrap)?,
        Method::Cmaes => run_cmaes(&spec.cmaes.unwrap_or_default(), objective, budget, seed).map_err(wrap)?,
        Method::BayesOpt => run_bayesopt(&spec.bayesopt.unwrap_or_default(), objective, budget, seed).map_err(wrap)?,
        Method::LineSearch | Method::FullStepOnly | Method::WarmStart => {
            let pspec = cfg
                .proposer_for(spec)
                .ok_or_else(|| HarnessError::Config(format!("method {} needs a proposer", spec.name())))?;
            let mut proposer = make_proposer(pspec, objective, seed)?;
            let opts = CalibOptions {
                line_search: spec.effective_line_search(),
                max_rounds: None,
            };
            let mut record = if spec.method == Method::WarmStart {
                run_warmstart(&opts, proposer.as_mut(), objective, budget, seed).map_err(wrap)?
            } else {
                run_calibration(&opts, proposer.as_mut(), objective, budget, seed).map_err(wrap)?
            };
            record.method = spec.method;
            record.config["proposer_spec"] = serde_json::to_value(pspec).expect("spec serializes");
            record
        }
    };
    record.label = spec.label.clone();
    Ok(record)
}

/// One line-searched proposal from the seeded init, then random search for
/// the rest of the budget.
fn run_warmstart(
    opts: &CalibOptions,
    proposer: &mut dyn Proposer,
    evaluator: &dyn Evaluator,
    budget: usize,
    seed: u64,
) -> Result<RunRecord, CalibError> {
    if budget == 0 {
        return Err(CalibError::Config("budget must be at least 1".into()));
    }
    let start = Instant::now();
    let mut tracker = EvalTracker::new(evaluator, budget);
    let init = evaluator.bounds().random_init(seed);
    let state = calibrate(
        &CalibOptions {
            max_rounds: Some(1),
            ..*opts
        },
        proposer,
        &mut tracker,
        &init,
    )?;
    if state.aborted.is_none() {
        random_fill(&mut tracker, seed)?;
    }
    let evaluate_s = tracker.eval_time().as_secs_f64();
    let config = serde_json::json!({
        "line_search": opts.line_search,
        "proposer": proposer.name(),
        "proposer_rounds": 1,
    });
    let mut record = RunRecord::from_tracker(Method::WarmStart, seed, config, tracker, state.rounds);
    record.proposer_evaluations = proposer.internal_evaluations();
    record.proposer_failures = state.failures;
    record.aborted = state.aborted;
    record.timing = Some(Timing {
        evaluate_s,
        propose_s: state.propose_time.as_secs_f64(),
        total_s: start.elapsed().as_secs_f64(),
    });
    Ok(record)
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    crate::io::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|e| IoError::new(path, e))?;
    Ok(())
}

fn host_name() -> String {
    std::env::var("HOSTNAME")
        .ok()
        .or_else(|| std::fs::read_to_string("/etc/hostname").ok())
        .map(|h| h.trim().to_string())
        .filter(|h| !h.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Runs every (method, seed) cell and writes records, summary, velocity
/// table and plot under the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    preflight(cfg)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let wall = Instant::now();
    let model = SwimmerModel::default();
    let reference = Arc::new(build_reference(cfg, &model)?);
    let objective = SwimObjective::new(reference.clone(), model);

    let out = cfg.output_dir.clone();
    let runs_dir = out.join("runs");
    create_dir(&runs_dir)?;
    let ref_dir = out.join("reference");
    let same_dir = matches!(&cfg.reference, ReferenceSpec::Directory { path }
        if path.canonicalize().ok().is_some_and(|p| ref_dir.canonicalize().ok() == Some(p)));
    if !same_dir {
        create_dir(&ref_dir)?;
        reference.write_dir(&ref_dir)?;
    }
    crate::io::write_json(&out.join("config.json"), cfg)?;

    let jobs: Vec<(&MethodSpec, u64)> = cfg
        .methods
        .iter()
        .flat_map(|m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let workers = cfg.workers.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<RunRecord, HarnessError>> =
        pool.install(|| jobs.par_iter().map(|(m, s)| run_method(cfg, m, &objective, *s)).collect());
    let records = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut timing = BTreeMap::new();
    let mut stems = Vec::new();
    for r in &records {
        let stem = r.stem();
        r.without_timing().write_json(&runs_dir.join(format!("{stem}.json")))?;
        r.write_curve_csv(&runs_dir.join(format!("{stem}.csv")))?;
        if let Some(t) = &r.timing {
            timing.insert(stem.clone(), t.clone());
        }
        stems.push(stem);
    }
    crate::io::write_json(&runs_dir.join(RUN_INDEX_FILE), &stems)?;

    let mut summary = summarize(&records)?;
    let entries: Vec<_> = summary
        .methods
        .iter()
        .filter_map(|m| {
            let seed = m.best_seed?;
            let r = records.iter().find(|r| r.seed == seed && r.label.as_deref().unwrap_or(r.method.tag()) == m.name)?;
            Some((m.name.clone(), seed, r.theta_best.clone()))
        })
        .collect();
    let velocity = velocity_sweep(&entries, &objective)?;
    summary.attach_velocity(&velocity);

    crate::io::write_json(&out.join("summary.json"), &summary)?;
    write_text(&out.join("summary.txt"), &summary.render_table())?;
    write_text(&out.join("velocity.csv"), &velocity.to_csv())?;
    write_text(&out.join("velocity_mae.csv"), &velocity.mae_csv())?;
    write_text(&out.join("convergence.svg"), &plot_convergence(&records)?)?;

    let sidecar = Sidecar {
        started_unix_s: started,
        host: host_name(),
        workers,
        wall_s: wall.elapsed().as_secs_f64(),
        timing,
    };
    crate::io::write_json(&out.join("sidecar.json"), &sidecar)?;

    Ok(ExperimentOutcome {
        output_dir: out,
        records,
        summary,
        velocity,
        sidecar,
    })
}

/// Reads the records under `<dir>/runs`, in index order when available.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let runs = dir.join("runs");
    let index = runs.join(RUN_INDEX_FILE);
    let stems: Vec<String> = if index.exists() {
        crate::io::read_json(&index)?
    } else {
        let mut s: Vec<String> = std::fs::read_dir(&runs)
            .map_err(|e| IoError::new(&runs, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                (p.extension()? == "json").then(|| p.file_stem()?.to_str().map(str::to_string))?
            })
            .collect();
        s.sort();
        s
    };
    let mut records = Vec::with_capacity(stems.len());
    for stem in stems {
        let path = runs.join(format!("{stem}.json"));
        let r = RunRecord::read_json(&path)?;
        r.check_invariants()
            .map_err(|e| HarnessError::CorruptRecord(format!("{}: {e}", path.display())))?;
        records.push(r);
    }
    Ok(records)
}

/// Recomputes the summary from records on disk. The velocity columns are
/// kept from an existing `summary.json` in the same directory.
pub fn summarize_dir(dir: &Path) -> Result<Summary, HarnessError> {
    let records = load_records(dir)?;
    let mut summary = summarize(&records)?;
    let existing = dir.join("summary.json");
    if existing.exists() {
        let old: Summary = crate::io::read_json(&existing)?;
        for m in &mut summary.methods {
            m.velocity_mae_mm_s = old.methods.iter().find(|o| o.name == m.name).and_then(|o| o.velocity_mae_mm_s);
        }
        summary.ordering_by_velocity = old.ordering_by_velocity;
    }
    Ok(summary)
}

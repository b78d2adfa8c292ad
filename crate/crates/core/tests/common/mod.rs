//! Checks shared by the integration tests and the acceptance suite. Each
//! returns a one-line detail on success and a reason on failure.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swimcal::params::ParamBounds;
use swimcal::swimsim::{simulate, simulate_from, ChainParams, Integrator, MarkerTrajectory, SimConfig, SwimmerModel, SwimmerState};

pub type Check = Result<String, String>;

/// Largest per-coordinate marker difference, with `mirror` flipping the
/// second trajectory's y axis.
pub fn max_marker_diff(a: &MarkerTrajectory, b: &MarkerTrajectory, mirror: bool) -> f64 {
    assert_eq!(a.frames.len(), b.frames.len());
    let sy = if mirror { -1.0 } else { 1.0 };
    a.frames
        .iter()
        .zip(&b.frames)
        .flat_map(|(fa, fb)| {
            fa.markers
                .iter()
                .zip(&fb.markers)
                .map(move |(p, q)| (p[0] - q[0]).abs().max((p[1] - sy * q[1]).abs()))
        })
        .fold(0.0, f64::max)
}

/// Unforced, damped swimmer released from a bent, moving state.
pub fn energy_decay(seed: u64) -> Check {
    let model = SwimmerModel::default();
    let theta = ParamBounds::swimmer().midpoint();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = SwimmerState::straight_at_rest();
    for j in 3..state.q.len() {
        state.q[j] = rng.random_range(-0.4..0.4);
    }
    for v in state.qd.iter_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    let mut integ = Integrator::new(&model, ChainParams::from_theta(&theta), 0.0, 1e-3, state, 1.0);
    let mut prev = integ.energy();
    let mut worst_rise = f64::NEG_INFINITY;
    let e0 = prev;
    for _ in 0..3000 {
        integ.step().map_err(|e| e.to_string())?;
        let e = integ.energy();
        if integ.state().t > 0.1 {
            worst_rise = worst_rise.max(e - prev);
        }
        prev = e;
    }
    if worst_rise <= 1e-9 {
        Ok(format!("E {e0:.3e} -> {prev:.3e} J, largest step change {worst_rise:.2e} J"))
    } else {
        Err(format!("energy rose by {worst_rise:.3e} J in one step"))
    }
}

pub fn mirror_symmetry(frequency: f64) -> Check {
    let model = SwimmerModel::default();
    let theta = ParamBounds::swimmer().midpoint();
    let cfg = SimConfig::default();
    let a = simulate_from(&theta, frequency, &cfg, &model, SwimmerState::straight_at_rest(), 1.0).map_err(|e| e.to_string())?;
    let b = simulate_from(&theta, frequency, &cfg, &model, SwimmerState::straight_at_rest(), -1.0).map_err(|e| e.to_string())?;
    let d = max_marker_diff(&a, &b, true);
    if d <= 1e-6 {
        Ok(format!("max mirror deviation {d:.2e} m at {frequency} Hz"))
    } else {
        Err(format!("mirror deviation {d:.3e} m at {frequency} Hz"))
    }
}

pub fn dt_halving() -> Check {
    let model = SwimmerModel::default();
    let theta = ParamBounds::swimmer().midpoint();
    let coarse = SimConfig::default();
    let fine = SimConfig {
        dt: coarse.dt / 2.0,
        ..coarse.clone()
    };
    let a = simulate(&theta, 1.0, &coarse, &model).map_err(|e| e.to_string())?;
    let b = simulate(&theta, 1.0, &fine, &model).map_err(|e| e.to_string())?;
    let d = max_marker_diff(&a, &b, false);
    if d < 1e-3 {
        Ok(format!("max marker change {d:.2e} m"))
    } else {
        Err(format!("halving dt moved markers by {d:.3e} m"))
    }
}

fn random_trajectory(rng: &mut ChaCha8Rng, frames: usize) -> MarkerTrajectory {
    use swimcal::swimsim::Frame;
    MarkerTrajectory {
        frequency: 1.0,
        sample_rate: 60.0,
        frames: (0..frames)
            .map(|i| Frame {
                t: i as f64 / 60.0,
                markers: std::array::from_fn(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]),
            })
            .collect(),
    }
}

/// Aggregate loss against a direct triple sum on random small trajectory
/// pairs; returns the largest relative deviation.
pub fn objective_brute_force(pairs: usize, seed: u64) -> Check {
    use swimcal::objective::{local_frame, trajectory_loss};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let nf = rng.random_range(1..=4);
        let nt = rng.random_range(1..=7);
        let mut sims = Vec::new();
        let mut reals = Vec::new();
        for _ in 0..nf {
            sims.push(local_frame(&random_trajectory(&mut rng, nt)).map_err(|e| e.to_string())?);
            reals.push(local_frame(&random_trajectory(&mut rng, nt)).map_err(|e| e.to_string())?);
        }
        let mut total = 0.0;
        for (s, r) in sims.iter().zip(&reals) {
            let mut per_freq = 0.0;
            for m in 0..9 {
                let mut per_marker = 0.0;
                for t in 0..nt {
                    let (p, q) = (s.frames[t].markers[m], r.frames[t].markers[m]);
                    per_marker += ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                }
                per_freq += per_marker / nt as f64;
            }
            total += per_freq / 9.0;
        }
        let brute = total / nf as f64;
        let got = trajectory_loss(&sims, &reals).map_err(|e| e.to_string())?;
        worst = worst.max((got - brute).abs() / brute.abs().max(f64::MIN_POSITIVE));
    }
    if worst <= 1e-12 {
        Ok(format!("{pairs} pairs, largest relative deviation {worst:.1e}"))
    } else {
        Err(format!("relative deviation {worst:.3e} exceeds 1e-12"))
    }
}

pub mod protocol {
    use std::sync::Arc;
    use std::time::Duration;

    use swimcal::objective::{Evaluator, ReferenceSet, SwimObjective};
    use swimcal::params::ParamBounds;
    use swimcal::proposer::stub::{StubConfig, StubReply, StubServer};
    use swimcal::proposer::{Proposer, ProposerContext, ProposerError, RemoteConfig, RemoteProposer};
    use swimcal::swimsim::{SimConfig, SwimmerModel};

    use super::Check;

    /// A real context: two frequencies, short trials.
    pub fn context() -> ProposerContext {
        let bounds = ParamBounds::swimmer();
        let sim = SimConfig {
            duration: 1.5,
            warmup: 0.5,
            ..SimConfig::default()
        };
        let model = SwimmerModel::default();
        let reference = ReferenceSet::synthetic_hidden(99, &[0.75, 1.5], 0.0, 0, &sim, &model).unwrap();
        let objective = SwimObjective::new(Arc::new(reference), model);
        let theta = bounds.random_init(1);
        let best = objective.evaluate(&theta).unwrap();
        let real = objective.reference().velocities.clone();
        ProposerContext::new(3, 20, theta, &best, bounds, real, Vec::new())
    }

    fn remote(endpoint: String, timeout_secs: f64, retries: usize) -> RemoteProposer {
        RemoteProposer::new(RemoteConfig {
            endpoint,
            timeout_secs,
            retries,
        })
    }

    pub fn midpoint_reply() -> Check {
        let ctx = context();
        let mid = ctx.bounds.midpoint();
        let server = StubServer::start("127.0.0.1:0", StubConfig::new(StubReply::Fixed(mid.0.clone()))).map_err(|e| e.to_string())?;
        let mut p = remote(server.endpoint(), 10.0, 2);
        let got = p.propose(&ctx).map_err(|e| e.to_string())?;
        if got.theta != mid {
            return Err(format!("expected the box midpoint, got {:?}", got.theta));
        }
        let server = StubServer::start("127.0.0.1:0", StubConfig::new(StubReply::TowardMidpoint(0.5))).map_err(|e| e.to_string())?;
        let mut p = remote(server.endpoint(), 10.0, 2);
        let half = p.propose(&ctx).map_err(|e| e.to_string())?;
        let expect: Vec<f64> = ctx.theta_best.0.iter().zip(&mid.0).map(|(t, m)| t + 0.5 * (m - t)).collect();
        if half.theta.0.iter().zip(&expect).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs().max(1.0)) {
            return Err("half-way reply does not match".into());
        }
        Ok("midpoint and half-way replies decoded exactly".into())
    }

    pub fn rejects_fifteen_numbers() -> Check {
        let ctx = context();
        let server = StubServer::start("127.0.0.1:0", StubConfig::new(StubReply::Fixed(vec![0.5; 15]))).map_err(|e| e.to_string())?;
        let mut p = remote(server.endpoint(), 10.0, 2);
        match p.propose(&ctx) {
            Err(ProposerError::Malformed { .. }) if server.requests() == 1 => {
                Ok("15-number reply rejected as malformed without retry".into())
            }
            other => Err(format!("expected a malformed-reply error, got {other:?} after {} requests", server.requests())),
        }
    }

    pub fn retries_on_server_errors() -> Check {
        let ctx = context();
        let cfg = StubConfig {
            fail_first: 100,
            ..StubConfig::new(StubReply::Echo)
        };
        let server = StubServer::start("127.0.0.1:0", cfg).map_err(|e| e.to_string())?;
        let mut p = remote(server.endpoint(), 10.0, 2);
        match p.propose(&ctx) {
            Err(ProposerError::Status { status: 503, attempts: 3 }) if server.requests() == 3 && p.attempts() == 3 => {}
            other => return Err(format!("expected 3 attempts ending in 503, got {other:?} ({} requests)", server.requests())),
        }
        // recovers when the server does before retries run out
        let cfg = StubConfig {
            fail_first: 2,
            ..StubConfig::new(StubReply::Echo)
        };
        let server = StubServer::start("127.0.0.1:0", cfg).map_err(|e| e.to_string())?;
        let mut p = remote(server.endpoint(), 10.0, 2);
        let got = p.propose(&ctx).map_err(|e| format!("third attempt should succeed: {e}"))?;
        if got.theta != ctx.theta_best || server.requests() != 3 {
            return Err("echo after two 503s did not round-trip".into());
        }
        Ok("retries = 2 gives exactly 3 attempts".into())
    }

    pub fn retries_on_timeout() -> Check {
        let ctx = context();
        let cfg = StubConfig {
            delay: Duration::from_millis(600),
            ..StubConfig::new(StubReply::Echo)
        };
        let server = StubServer::start("127.0.0.1:0", cfg).map_err(|e| e.to_string())?;
        let mut p = remote(server.endpoint(), 0.2, 2);
        match p.propose(&ctx) {
            Err(ProposerError::Timeout { attempts: 3 }) if p.attempts() == 3 => Ok("timeouts retried: 3 attempts".into()),
            other => Err(format!("expected a timeout after 3 attempts, got {other:?}")),
        }
    }

}

pub mod harness {
    use std::path::Path;

    use serde_json::Value;
    use swimcal::calib::Method;
    use swimcal::harness::{ExperimentConfig, MethodSpec, ProposerSpec, ReferenceSpec};
    use swimcal::swimsim::SimConfig;

    use super::Check;

    /// Short trials at three frequencies; everything else default.
    pub fn fast_config(out: &Path, methods: &[Method], seeds: &[u64], budget: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            ReferenceSpec::Synthetic {
                hidden_seed: 0,
                noise_sigma: 0.0,
                noise_seed: 0,
            },
            methods.iter().map(|&m| MethodSpec::new(m)).collect(),
        );
        cfg.frequencies = vec![0.75, 1.25, 2.0];
        cfg.sim = SimConfig {
            duration: 2.0,
            warmup: 0.5,
            ..SimConfig::default()
        };
        cfg.budget = budget;
        cfg.seeds = seeds.to_vec();
        cfg.proposer = Some(ProposerSpec::Oracle {
            gamma: 2.0,
            sigma_dir: 0.2,
        });
        cfg.output_dir = out.to_path_buf();
        cfg
    }

    fn files(dir: &Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p.strip_prefix(dir).unwrap().to_path_buf());
                }
            }
        }
        out.sort();
        out
    }

    /// Every output except the sidecar and the echoed config (which names
    /// the output directory) is byte-identical.
    pub fn identical_outputs(a: &Path, b: &Path) -> Check {
        let fa = files(a);
        let fb = files(b);
        if fa != fb {
            return Err(format!("file sets differ: {fa:?} vs {fb:?}"));
        }
        let mut compared = 0;
        for f in &fa {
            let name = f.to_string_lossy();
            if name == "sidecar.json" || name == "config.json" {
                continue;
            }
            if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
                return Err(format!("{name} differs"));
            }
            compared += 1;
        }
        Ok(format!("{compared} files byte-identical"))
    }

    fn num(v: &Value) -> f64 {
        v.as_f64().unwrap_or(f64::INFINITY)
    }

    fn close(a: f64, b: f64) -> bool {
        a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
    }

    /// Recomputes the summary from the JSON records with no library types
    /// and compares it with `summary.json`.
    pub fn independent_summary(dir: &Path) -> Check {
        let read = |p: &Path| -> Value { serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap() };
        let stems: Vec<String> = serde_json::from_value(read(&dir.join("runs/index.json"))).unwrap();
        let summary = read(&dir.join("summary.json"));
        let mut budgets = Vec::new();
        let mut checked = 0;
        for m in summary["methods"].as_array().unwrap() {
            let name = m["name"].as_str().unwrap();
            let mut finals = Vec::new();
            let mut aucs = Vec::new();
            for stem in &stems {
                let r = read(&dir.join(format!("runs/{stem}.json")));
                let rname = r["label"].as_str().or(r["method"].as_str()).unwrap();
                if rname != name || !r["aborted"].is_null() {
                    continue;
                }
                let curve: Vec<f64> = r["best_curve"].as_array().unwrap().iter().map(num).collect();
                let area = curve.iter().sum::<f64>() / curve.len() as f64;
                let fin = num(&r["loss_best"]);
                if area < fin {
                    return Err(format!("{stem}: AUC {area} below final {fin}"));
                }
                budgets.push(r["evaluations"].as_array().unwrap().len());
                finals.push(fin);
                aucs.push(area);
            }
            for (key_mean, key_std, v) in [("best_mean", "best_std", &finals), ("auc_mean", "auc_std", &aucs)] {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                if !close(mean, num(&m[key_mean])) || !close(std, num(&m[key_std])) {
                    return Err(format!("{name}: {key_mean}/{key_std} disagree"));
                }
                checked += 2;
            }
            let worst = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !close(worst, num(&m["worst"])) {
                return Err(format!("{name}: worst disagrees"));
            }
        }
        if budgets.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("evaluation counts differ across records: {budgets:?}"));
        }
        Ok(format!("{checked} statistics match within 1e-12"))
    }
}

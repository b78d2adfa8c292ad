use serde::{Deserialize, Serialize};

use super::velocity::VelocitySweep;
use super::HarnessError;
use crate::calib::{Method, MultiplierShare, RunRecord};

pub const SUMMARY_SCHEMA: &str = "swimcal.summary.v1";

/// Mean of a best-so-far curve. Rejects empty or increasing curves, which
/// can only come from a corrupted record.
pub fn auc(curve: &[f64]) -> Result<f64, HarnessError> {
    if curve.is_empty() {
        return Err(HarnessError::CorruptRecord("empty best-so-far curve".into()));
    }
    if let Some(i) = curve.windows(2).position(|w| w[1] > w[0]) {
        return Err(HarnessError::CorruptRecord(format!(
            "best-so-far curve increases at evaluation {}",
            i + 2
        )));
    }
    // Mean taken as an offset above the final value: exact for constant
    // curves and never below the final loss.
    let last = curve[curve.len() - 1];
    if last.is_infinite() {
        return Ok(last);
    }
    Ok(last + curve.iter().map(|v| v - last).sum::<f64>() / curve.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if !mean.is_finite() {
        return Some((mean, f64::NAN));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    #[serde(with = "crate::serde_ext::f64_inf_null")]
    pub final_loss: f64,
    #[serde(with = "crate::serde_ext::f64_inf_null")]
    pub auc: f64,
    pub evaluations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub name: String,
    pub method: Method,
    pub runs: Vec<SeedResult>,
    /// Seeds whose run aborted; they are left out of every statistic.
    pub missing_seeds: Vec<u64>,
    pub best_mean: Option<f64>,
    pub best_std: Option<f64>,
    pub worst: Option<f64>,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept_rate_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept_rate_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evals_per_accepted: Option<f64>,
    /// Accepted multipliers pooled over seeds.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub multiplier_histogram: Vec<MultiplierShare>,
    /// Seed with the lowest final loss; its parameters feed the velocity check.
    pub best_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_mae_mm_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deviations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub budget: Option<usize>,
    pub methods: Vec<MethodSummary>,
    /// Method names by ascending mean final loss.
    pub ordering_by_loss: Vec<String>,
    /// Method names by ascending velocity MAE, when a sweep was attached.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ordering_by_velocity: Vec<String>,
}

fn finite_opt(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn deviations(method: Method) -> Vec<String> {
    match method {
        Method::BayesOpt => vec!["acquisition is expected improvement only, not an EI/LCB/PI portfolio".into()],
        _ => Vec::new(),
    }
}

fn summarize_group(name: &str, records: &[&RunRecord]) -> Result<MethodSummary, HarnessError> {
    let method = records[0].method;
    let mut runs = Vec::new();
    let mut missing = Vec::new();
    let mut rates = Vec::new();
    let mut loop_evals = 0usize;
    let mut accepted_total = 0usize;
    let mut pooled: Vec<MultiplierShare> = Vec::new();
    for r in records {
        if r.method != method {
            return Err(HarnessError::CorruptRecord(format!(
                "name {name} used by both {} and {}",
                method, r.method
            )));
        }
        if r.aborted.is_some() {
            missing.push(r.seed);
            continue;
        }
        let a = auc(&r.best_curve)?;
        let rate = r.accept.as_ref().and_then(|s| s.accept_rate);
        if let Some(rate) = rate {
            rates.push(rate);
        }
        if let Some(s) = &r.accept {
            accepted_total += s.accepted;
            loop_evals += r.rounds.iter().map(|o| o.evaluations).sum::<usize>();
            for h in &s.histogram {
                match pooled.iter_mut().find(|p| p.multiplier == h.multiplier) {
                    Some(p) => p.count += h.count,
                    None => pooled.push(h.clone()),
                }
            }
        }
        runs.push(SeedResult {
            seed: r.seed,
            final_loss: r.loss_best,
            auc: a,
            evaluations: r.evaluations.len(),
            accept_rate: rate,
        });
    }
    for p in &mut pooled {
        p.fraction = p.count as f64 / accepted_total as f64;
    }
    pooled.sort_by(|a, b| b.multiplier.total_cmp(&a.multiplier));
    runs.sort_by_key(|r| r.seed);
    missing.sort_unstable();

    let finals: Vec<f64> = runs.iter().map(|r| r.final_loss).collect();
    let aucs: Vec<f64> = runs.iter().map(|r| r.auc).collect();
    let best = mean_std(&finals);
    let area = mean_std(&aucs);
    let rate = mean_std(&rates);
    Ok(MethodSummary {
        name: name.to_string(),
        method,
        best_mean: best.and_then(|b| finite_opt(b.0)),
        best_std: best.and_then(|b| finite_opt(b.1)),
        worst: finals.iter().copied().reduce(f64::max).and_then(finite_opt),
        auc_mean: area.and_then(|b| finite_opt(b.0)),
        auc_std: area.and_then(|b| finite_opt(b.1)),
        accept_rate_mean: rate.map(|r| r.0),
        accept_rate_std: rate.map(|r| r.1),
        evals_per_accepted: (accepted_total > 0).then(|| loop_evals as f64 / accepted_total as f64),
        multiplier_histogram: pooled,
        best_seed: runs
            .iter()
            .min_by(|a, b| a.final_loss.total_cmp(&b.final_loss).then(a.seed.cmp(&b.seed)))
            .map(|r| r.seed),
        velocity_mae_mm_s: None,
        deviations: deviations(method),
        runs,
        missing_seeds: missing,
    })
}

fn ordering(methods: &[MethodSummary], key: impl Fn(&MethodSummary) -> Option<f64>) -> Vec<String> {
    let mut v: Vec<(f64, &str)> = methods
        .iter()
        .map(|m| (key(m).unwrap_or(f64::INFINITY), m.name.as_str()))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    v.into_iter().map(|(_, n)| n.to_string()).collect()
}

/// Builds the summary from records, grouping by display name in order of
/// first appearance.
pub fn summarize(records: &[RunRecord]) -> Result<Summary, HarnessError> {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        let n = r.label.clone().unwrap_or_else(|| r.method.tag().to_string());
        if !names.contains(&n) {
            names.push(n);
        }
    }
    let budgets: Vec<usize> = records.iter().filter(|r| r.aborted.is_none()).map(|r| r.budget).collect();
    if budgets.windows(2).any(|w| w[0] != w[1]) {
        return Err(HarnessError::CorruptRecord("records disagree on the budget".into()));
    }
    for r in records.iter().filter(|r| r.aborted.is_none()) {
        if r.evaluations.len() != r.budget {
            return Err(HarnessError::CorruptRecord(format!(
                "{} charged {} evaluations for budget {}",
                r.stem(),
                r.evaluations.len(),
                r.budget
            )));
        }
    }
    let mut methods = Vec::new();
    for n in &names {
        let group: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.label.as_deref().unwrap_or(r.method.tag()) == n)
            .collect();
        methods.push(summarize_group(n, &group)?);
    }
    Ok(Summary {
        schema: SUMMARY_SCHEMA.to_string(),
        budget: budgets.first().copied(),
        ordering_by_loss: ordering(&methods, |m| m.best_mean),
        ordering_by_velocity: Vec::new(),
        methods,
    })
}

impl Summary {
    pub fn attach_velocity(&mut self, sweep: &VelocitySweep) {
        for m in &mut self.methods {
            m.velocity_mae_mm_s = sweep.methods.iter().find(|v| v.method == m.name).and_then(|v| v.mae_mm_s);
        }
        self.ordering_by_velocity = ordering(&self.methods, |m| m.velocity_mae_mm_s);
    }

    /// Plain-text table with losses in millimeters.
    pub fn render_table(&self) -> String {
        let mm = |v: Option<f64>| v.map(|x| format!("{:.2}", 1e3 * x)).unwrap_or_else(|| "-".into());
        let pm = |m: Option<f64>, s: Option<f64>| match (m, s) {
            (Some(m), Some(s)) => format!("{:.2} ± {:.2}", 1e3 * m, 1e3 * s),
            (Some(m), None) => format!("{:.2}", 1e3 * m),
            _ => "-".into(),
        };
        let mut rows = vec![[
            "method".to_string(),
            "best [mm]".into(),
            "worst [mm]".into(),
            "AUC [mm]".into(),
            "accept".into(),
            "vel. MAE [mm/s]".into(),
            "missing".into(),
        ]];
        for m in &self.methods {
            rows.push([
                m.name.clone(),
                pm(m.best_mean, m.best_std),
                mm(m.worst),
                pm(m.auc_mean, m.auc_std),
                m.accept_rate_mean.map(|r| format!("{:.1}%", 100.0 * r)).unwrap_or_else(|| "-".into()),
                m.velocity_mae_mm_s.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
                m.missing_seeds.len().to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..7)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}", w = *w))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out.push_str(&format!("order by final loss: {}\n", self.ordering_by_loss.join(" < ")));
        if !self.ordering_by_velocity.is_empty() {
            out.push_str(&format!("order by velocity MAE: {}\n", self.ordering_by_velocity.join(" < ")));
        }
        for m in &self.methods {
            for d in &m.deviations {
                out.push_str(&format!("note ({}): {d}\n", m.name));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[100.0; 40]).unwrap(), 100.0);
        for c in [0.1, std::f64::consts::PI, 1e-7, 2.7e-3] {
            assert_eq!(auc(&[c; 40]).unwrap(), c);
        }
        assert_eq!(auc(&[f64::INFINITY, 1.0]).unwrap(), f64::INFINITY);
        assert_eq!(auc(&[f64::INFINITY; 3]).unwrap(), f64::INFINITY);
        let mut c = vec![4.0; 20];
        c.extend([2.0; 20]);
        assert_eq!(auc(&c).unwrap(), 3.0);
        assert!(matches!(auc(&[1.0, 2.0]), Err(HarnessError::CorruptRecord(_))));
        assert!(auc(&[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn auc_lies_between_final_and_first(mut v in proptest::collection::vec(0.0f64..10.0, 1..60)) {
            v.sort_by(|a, b| b.total_cmp(a));
            let a = auc(&v).unwrap();
            proptest::prop_assert!(a >= v[v.len() - 1] && a <= v[0]);
        }
    }

    #[test]
    fn mean_std_is_population() {
        let (m, s) = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!((m, s), (2.0, 1.0));
        assert!(mean_std(&[]).is_none());
    }
}

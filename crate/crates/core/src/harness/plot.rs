//! Convergence plot as a self-contained SVG.
//!
//! The plot group carries its data-to-pixel mapping in attributes so the
//! figure can be checked against the records it was drawn from:
//! `x_px = data-x-scale * eval_index + data-x-offset` and
//! `y_px = data-y-scale * log10(loss_mm) + data-y-offset`.

use std::fmt::Write as _;

use super::summary::auc;
use super::HarnessError;
use crate::calib::RunRecord;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
/// Losses are floored here (mm) so exact hits stay on a log axis.
const FLOOR_MM: f64 = 1e-9;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurve {
    pub name: String,
    /// Mean best-so-far loss per evaluation; infinite where any seed was.
    pub mean: Vec<f64>,
    /// `(seed, final loss)` per completed run.
    pub finals: Vec<(u64, f64)>,
}

fn name_of(r: &RunRecord) -> &str {
    r.label.as_deref().unwrap_or(r.method.tag())
}

/// Per-method mean curves over completed runs, in order of first appearance.
pub fn mean_curves(records: &[RunRecord]) -> Result<Vec<MeanCurve>, HarnessError> {
    let mut out: Vec<MeanCurve> = Vec::new();
    let mut sums: Vec<(Vec<f64>, usize)> = Vec::new();
    for r in records {
        let i = match out.iter().position(|c| c.name == name_of(r)) {
            Some(i) => i,
            None => {
                out.push(MeanCurve {
                    name: name_of(r).to_string(),
                    mean: Vec::new(),
                    finals: Vec::new(),
                });
                sums.push((Vec::new(), 0));
                out.len() - 1
            }
        };
        if r.aborted.is_some() {
            continue;
        }
        auc(&r.best_curve)?;
        let (sum, n) = &mut sums[i];
        if *n > 0 && sum.len() != r.best_curve.len() {
            return Err(HarnessError::CorruptRecord(format!("{}: curve length differs across seeds", r.stem())));
        }
        if *n == 0 {
            *sum = vec![0.0; r.best_curve.len()];
        }
        for (s, v) in sum.iter_mut().zip(&r.best_curve) {
            *s += v;
        }
        *n += 1;
        out[i].finals.push((r.seed, r.loss_best));
    }
    for (c, (sum, n)) in out.iter_mut().zip(sums) {
        c.mean = sum.into_iter().map(|s| s / n as f64).collect();
        c.finals.sort_by_key(|f| f.0);
    }
    Ok(out)
}

fn log_mm(loss_m: f64) -> f64 {
    (1e3 * loss_m).max(FLOOR_MM).log10()
}

pub fn plot_convergence(records: &[RunRecord]) -> Result<String, HarnessError> {
    let curves = mean_curves(records)?;
    let n_max = curves.iter().map(|c| c.mean.len()).max().unwrap_or(0).max(2);

    let finite_logs: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.mean.iter().chain(c.finals.iter().map(|f| &f.1)))
        .filter(|v| v.is_finite())
        .map(|&v| log_mm(v))
        .collect();
    let (mut lo, mut hi) = finite_logs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let xs = plot_w / (n_max as f64 - 1.0);
    let xo = LEFT - xs;
    let ys = -plot_h / (hi - lo);
    let yo = TOP - ys * hi;
    let px = |i: f64| xs * i + xo;
    let py = |l: f64| ys * l + yo;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT} {TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for d in (lo as i32)..=(hi as i32) {
        let y = py(d as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{}" y1="{y}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">1e{d}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let step = (n_max / 8).max(1);
    let mut i = 1;
    while i <= n_max {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{i}</text>"#,
            px(i as f64),
            TOP + plot_h + 18.0
        );
        i += step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">evaluation</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">best loss [mm]</text>"#,
        TOP + plot_h / 2.0
    );

    let _ = writeln!(
        s,
        r#"<g id="plot" data-x-scale="{xs}" data-x-offset="{xo}" data-y-scale="{ys}" data-y-offset="{yo}" data-y-floor-mm="{FLOOR_MM}">"#
    );
    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = c
            .mean
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{},{}", px(i as f64 + 1.0), py(log_mm(v))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="mean" data-method="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            c.name,
            points.join(" ")
        );
        for (seed, v) in c.finals.iter().filter(|f| f.1.is_finite()) {
            let n = c.mean.len() as f64;
            let _ = writeln!(
                s,
                r#"<circle class="final" data-method="{}" data-seed="{seed}" cx="{}" cy="{}" r="3" fill="{color}" fill-opacity="0.6"/>"#,
                c.name,
                px(n),
                py(log_mm(*v))
            );
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + plot_w + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            c.name
        );
    }
    let _ = writeln!(s, "</g>\n</svg>");
    Ok(s)
}

//! Body-frame alignment and trajectory metrics.

use thiserror::Error;

use crate::swimsim::{Frame, MarkerTrajectory, Point, MARKER_COUNT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame {0}: markers M0 and M1 coincide, heading undefined")]
    CoincidentHeading(usize),
    #[error("frame counts differ: simulated {sim}, reference {real}")]
    FrameCountMismatch { sim: usize, real: usize },
    #[error("frame {0}: timestamps differ between simulated and reference")]
    TimestampMismatch(usize),
    #[error("need at least {0} frames")]
    TooShort(usize),
}

/// Expresses every frame in the body frame: M0 at the origin, M0->M1 along +x.
///
/// The rotation is applied with the unnormalized heading and divided by its
/// length afterwards, which makes M1's y coordinate exactly zero.
pub fn local_frame(traj: &MarkerTrajectory) -> Result<MarkerTrajectory, FrameError> {
    let mut frames = Vec::with_capacity(traj.frames.len());
    for (i, f) in traj.frames.iter().enumerate() {
        let origin = f.markers[0];
        let hx = f.markers[1][0] - origin[0];
        let hy = f.markers[1][1] - origin[1];
        let len = hx.hypot(hy);
        if len == 0.0 || !len.is_finite() {
            return Err(FrameError::CoincidentHeading(i));
        }
        let markers = f.markers.map(|p| {
            let dx = p[0] - origin[0];
            let dy = p[1] - origin[1];
            [(hx * dx + hy * dy) / len, (hx * dy - hy * dx) / len]
        });
        frames.push(Frame { t: f.t, markers });
    }
    Ok(MarkerTrajectory {
        frequency: traj.frequency,
        sample_rate: traj.sample_rate,
        frames,
    })
}

/// Per-marker mean Euclidean distance and its mean over markers.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerErrors {
    pub per_marker: [f64; MARKER_COUNT],
    pub mean: f64,
}

/// `(1/T) sum_t ||p_sim(t) - p_real(t)||` for each marker; both inputs are
/// expected in the body frame on the same time grid.
pub fn marker_error(sim: &MarkerTrajectory, real: &MarkerTrajectory) -> Result<MarkerErrors, FrameError> {
    if sim.frames.len() != real.frames.len() {
        return Err(FrameError::FrameCountMismatch {
            sim: sim.frames.len(),
            real: real.frames.len(),
        });
    }
    if sim.frames.is_empty() {
        return Err(FrameError::TooShort(1));
    }
    let mut sums = [0.0; MARKER_COUNT];
    for (i, (s, r)) in sim.frames.iter().zip(&real.frames).enumerate() {
        if (s.t - r.t).abs() > 1e-9 * s.t.abs().max(1.0) {
            return Err(FrameError::TimestampMismatch(i));
        }
        for (sum, (a, b)) in sums.iter_mut().zip(s.markers.iter().zip(&r.markers)) {
            *sum += distance(*a, *b);
        }
    }
    let n = sim.frames.len() as f64;
    let per_marker = sums.map(|s| s / n);
    let mean = per_marker.iter().sum::<f64>() / MARKER_COUNT as f64;
    Ok(MarkerErrors { per_marker, mean })
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Head-marker speed along the swimming axis (m/s).
///
/// The axis is the direction of net M0 displacement from the first to the
/// last frame; the speed is the least-squares slope of the M0 projection on
/// that axis against time, so it is non-negative up to fit noise. A
/// trajectory with no net displacement has speed 0.
pub fn forward_velocity(traj: &MarkerTrajectory) -> Result<f64, FrameError> {
    if traj.frames.len() < 2 {
        return Err(FrameError::TooShort(2));
    }
    let first = traj.frames[0].markers[0];
    let last = traj.frames[traj.frames.len() - 1].markers[0];
    let dx = last[0] - first[0];
    let dy = last[1] - first[1];
    let len = dx.hypot(dy);
    if len == 0.0 {
        return Ok(0.0);
    }
    let axis = [dx / len, dy / len];
    let n = traj.frames.len() as f64;
    let (mut st, mut sp) = (0.0, 0.0);
    for f in &traj.frames {
        st += f.t;
        sp += f.markers[0][0] * axis[0] + f.markers[0][1] * axis[1];
    }
    let (mt, mp) = (st / n, sp / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for f in &traj.frames {
        let p = f.markers[0][0] * axis[0] + f.markers[0][1] * axis[1];
        sxy += (f.t - mt) * (p - mp);
        sxx += (f.t - mt) * (f.t - mt);
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn traj_from(frames: Vec<[Point; MARKER_COUNT]>, rate: f64) -> MarkerTrajectory {
        MarkerTrajectory {
            frequency: 1.0,
            sample_rate: rate,
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(i, markers)| Frame { t: i as f64 / rate, markers })
                .collect(),
        }
    }

    fn random_body(rng: &mut ChaCha8Rng) -> [Point; MARKER_COUNT] {
        std::array::from_fn(|m| [m as f64 * 0.07 + rng.random_range(-0.02..0.02), rng.random_range(-0.05..0.05)])
    }

    fn rigid(p: Point, angle: f64, shift: Point) -> Point {
        let (s, c) = angle.sin_cos();
        [c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]]
    }

    #[test]
    fn heading_along_y_rotates_to_x() {
        let mut m = [[1.0, 1.0]; MARKER_COUNT];
        m[1] = [1.0, 2.0];
        m[2] = [2.0, 1.0];
        let out = local_frame(&traj_from(vec![m], 60.0)).unwrap();
        let f = &out.frames[0].markers;
        assert_eq!(f[0], [0.0, 0.0]);
        assert!((f[1][0] - 1.0).abs() < 1e-15 && f[1][1] == 0.0);
        // +x in the input is -y after rotating by -90 degrees
        assert!((f[2][0]).abs() < 1e-15 && (f[2][1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn local_frame_is_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<_> = (0..20).map(|_| random_body(&mut rng)).collect();
        let base = local_frame(&traj_from(frames.clone(), 60.0)).unwrap();
        let moved: Vec<_> = frames
            .iter()
            .map(|m| {
                let angle = rng.random_range(-3.0..3.0);
                let shift = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
                m.map(|p| rigid(p, angle, shift))
            })
            .collect();
        let out = local_frame(&traj_from(moved, 60.0)).unwrap();
        for (a, b) in base.frames.iter().zip(&out.frames) {
            for m in 0..MARKER_COUNT {
                assert!(distance(a.markers[m], b.markers[m]) < 1e-12);
            }
            assert_eq!(b.markers[0], [0.0, 0.0]);
            assert_eq!(b.markers[1][1], 0.0);
            assert!(b.markers[1][0] > 0.0);
        }
    }

    #[test]
    fn local_frame_fixed_point_and_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let body = random_body(&mut rng);
        let once = local_frame(&traj_from(vec![body], 60.0)).unwrap();
        let twice = local_frame(&once).unwrap();
        for m in 0..MARKER_COUNT {
            assert!(distance(once.frames[0].markers[m], twice.frames[0].markers[m]) < 1e-12);
            for k in 0..MARKER_COUNT {
                let before = distance(body[m], body[k]);
                let after = distance(once.frames[0].markers[m], once.frames[0].markers[k]);
                assert!((before - after).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coincident_heading_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let good = random_body(&mut rng);
        let mut bad = good;
        bad[1] = bad[0];
        assert_eq!(
            local_frame(&traj_from(vec![good, bad], 60.0)),
            Err(FrameError::CoincidentHeading(1))
        );
    }

    #[test]
    fn marker_error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frames: Vec<_> = (0..5).map(|_| random_body(&mut rng)).collect();
        let a = traj_from(frames.clone(), 60.0);
        let same = marker_error(&a, &a).unwrap();
        assert!(same.per_marker.iter().all(|&v| v == 0.0));

        // one marker moving (0,0) -> (1,0) against a still reference: 0.5
        let still = traj_from(vec![[[0.0, 0.0]; MARKER_COUNT]; 2], 60.0);
        let mut moving = still.clone();
        moving.frames[1].markers[4] = [1.0, 0.0];
        let e = marker_error(&moving, &still).unwrap();
        assert_eq!(e.per_marker[4], 0.5);
        assert!((e.mean - 0.5 / 9.0).abs() < 1e-15);

        let c = [0.003, -0.004];
        let shifted = a.map_points(|p| [p[0] + c[0], p[1] + c[1]]);
        let e = marker_error(&shifted, &a).unwrap();
        for v in e.per_marker {
            assert!((v - 0.005).abs() < 1e-12);
        }
    }

    #[test]
    fn marker_error_rejects_mismatched_schedules() {
        let a = traj_from(vec![[[0.0, 0.0]; MARKER_COUNT]; 3], 60.0);
        let b = traj_from(vec![[[0.0, 0.0]; MARKER_COUNT]; 2], 60.0);
        assert_eq!(
            marker_error(&a, &b),
            Err(FrameError::FrameCountMismatch { sim: 3, real: 2 })
        );
        let c = traj_from(vec![[[0.0, 0.0]; MARKER_COUNT]; 3], 30.0);
        assert_eq!(marker_error(&a, &c), Err(FrameError::TimestampMismatch(1)));
    }

    fn head_track(xs: &[(f64, f64)], rate: f64) -> MarkerTrajectory {
        traj_from(
            xs.iter()
                .map(|&(x, y)| {
                    let mut m = [[0.0; 2]; MARKER_COUNT];
                    m[0] = [x, y];
                    m
                })
                .collect(),
            rate,
        )
    }

    #[test]
    fn velocity_of_exact_line() {
        let pts: Vec<_> = (0..300).map(|i| (0.05 * i as f64 / 60.0, 0.0)).collect();
        let v = forward_velocity(&head_track(&pts, 60.0)).unwrap();
        assert!((v - 0.05).abs() < 1e-12);
    }

    #[test]
    fn velocity_of_still_head_is_zero() {
        let pts = vec![(0.3, -0.2); 50];
        assert_eq!(forward_velocity(&head_track(&pts, 60.0)).unwrap(), 0.0);
    }

    #[test]
    fn velocity_under_uniform_noise() {
        // OLS slope std with u ~ U(+-1 mm) over 5 s: sqrt(var(u) / sum (t - tbar)^2)
        // ~ 0.23 mm/s, so +-2 mm/s is ~9 sigma.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let pts: Vec<_> = (0..300)
                .map(|i| (0.05 * i as f64 / 60.0 + rng.random_range(-0.001..0.001), 0.0))
                .collect();
            let v = forward_velocity(&head_track(&pts, 60.0)).unwrap();
            assert!((v - 0.05).abs() < 0.002, "{v}");
        }
    }

    #[test]
    fn velocity_rotation_invariant() {
        let pts: Vec<_> = (0..120)
            .map(|i| {
                let t = i as f64 / 60.0;
                (-0.1 * t + 0.01 * (9.0 * t).sin(), 0.02 * (4.0 * t).cos())
            })
            .collect();
        let base = forward_velocity(&head_track(&pts, 60.0)).unwrap();
        for angle in [0.3, 1.7, -2.5] {
            let rot: Vec<_> = pts
                .iter()
                .map(|&(x, y)| {
                    let p = rigid([x, y], angle, [1.0, -2.0]);
                    (p[0], p[1])
                })
                .collect();
            let v = forward_velocity(&head_track(&rot, 60.0)).unwrap();
            assert!((v - base).abs() < 1e-12);
        }
        assert!(base > 0.0);
    }
}

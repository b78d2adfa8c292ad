//! Quasi-steady planar fluid wrench on a single link.
//!
//! Velocities are expressed in the link frame: `t` along the link axis
//! (head to tail), `n` perpendicular to it. Five terms, each linear in its
//! coefficient:
//!
//! * blunt drag, normal direction: `-1/2 rho c S_n |v_n| v_n`
//! * slender drag, axial direction: `-1/2 rho c S_t |v_t| v_t`
//! * angular drag: `-1/2 rho c S_n L^2 |w| w`
//! * Kutta lift: magnitude `1/2 rho c S_n |v|^2 sin(2 alpha)`, perpendicular
//!   to the velocity and opposing growth of the angle of attack
//! * Magnus lift: `rho c S_n L w` times the velocity rotated by +90 degrees
//!
//! Both lift terms are perpendicular to the velocity and do no work.

use super::model::Link;

/// Coefficient order: blunt, slender, angular, Kutta, Magnus.
pub type FluidCoefficients = [f64; 5];

/// Link-frame velocity state of one link.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinkTwist {
    pub v_t: f64,
    pub v_n: f64,
    pub omega: f64,
}

/// Link-frame force components and torque about the link center.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub f_t: f64,
    pub f_n: f64,
    pub torque: f64,
}

impl Wrench {
    pub fn as_array(&self) -> [f64; 3] {
        [self.f_t, self.f_n, self.torque]
    }
}

pub fn fluid_wrench(twist: LinkTwist, c: &FluidCoefficients, link: &Link, rho: f64) -> Wrench {
    let LinkTwist { v_t, v_n, omega } = twist;
    let half_rho = 0.5 * rho;
    let s_n = link.normal_area;
    let len = link.length;

    let mut f_t = -half_rho * c[1] * link.tangential_area * v_t.abs() * v_t;
    let mut f_n = -half_rho * c[0] * s_n * v_n.abs() * v_n;
    let torque = -half_rho * c[2] * s_n * len * len * omega.abs() * omega;

    // 1/2 |v|^2 sin(2 alpha) = v_t v_n; direction (v_n, -v_t) / |v|.
    let speed = v_t.hypot(v_n);
    if speed > 0.0 {
        let k = rho * c[3] * s_n * v_t * v_n / speed;
        f_t += k * v_n;
        f_n -= k * v_t;
    }

    let m = rho * c[4] * s_n * len * omega;
    f_t -= m * v_n;
    f_n += m * v_t;

    Wrench { f_t, f_n, torque }
}

/// Analytic Jacobian `d(f_t, f_n, torque) / d(v_t, v_n, omega)`, row-major.
pub fn fluid_wrench_jacobian(
    twist: LinkTwist,
    c: &FluidCoefficients,
    link: &Link,
    rho: f64,
) -> [[f64; 3]; 3] {
    let LinkTwist { v_t, v_n, omega } = twist;
    let s_n = link.normal_area;
    let len = link.length;
    let mut j = [[0.0; 3]; 3];

    j[0][0] = -rho * c[1] * link.tangential_area * v_t.abs();
    j[1][1] = -rho * c[0] * s_n * v_n.abs();
    j[2][2] = -rho * c[2] * s_n * len * len * omega.abs();

    let speed = v_t.hypot(v_n);
    if speed > 0.0 {
        let a = rho * c[3] * s_n;
        let s3 = speed * speed * speed;
        let (t2, n2) = (v_t * v_t, v_n * v_n);
        j[0][0] += a * n2 * n2 / s3;
        j[0][1] += a * v_t * v_n * (2.0 * t2 + n2) / s3;
        j[1][0] -= a * v_t * v_n * (t2 + 2.0 * n2) / s3;
        j[1][1] -= a * t2 * t2 / s3;
    }

    let b = rho * c[4] * s_n * len;
    j[0][1] -= b * omega;
    j[0][2] -= b * v_n;
    j[1][0] += b * omega;
    j[1][2] += b * v_t;

    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swimsim::model::SwimmerModel;

    fn tail_link() -> Link {
        SwimmerModel::default().links()[1]
    }

    #[test]
    fn quiescent_fluid_gives_zero_wrench() {
        let w = fluid_wrench(LinkTwist::default(), &[10.0; 5], &tail_link(), 1000.0);
        assert_eq!(w, Wrench::default());
    }

    #[test]
    fn zero_coefficients_give_zero_wrench() {
        let twist = LinkTwist { v_t: 0.3, v_n: -1.2, omega: 4.0 };
        let w = fluid_wrench(twist, &[0.0; 5], &tail_link(), 1000.0);
        assert_eq!(w.as_array(), [0.0; 3]);
    }

    #[test]
    fn pure_normal_blunt_drag() {
        // 1/2 * 1000 * 2 * 0.0064 * 1 * 1 = 6.4 N opposing the motion.
        let twist = LinkTwist { v_t: 0.0, v_n: 1.0, omega: 0.0 };
        let w = fluid_wrench(twist, &[2.0, 0.0, 0.0, 0.0, 0.0], &tail_link(), 1000.0);
        assert!((w.f_n + 6.4).abs() < 1e-12);
        assert_eq!(w.f_t, 0.0);
    }

    #[test]
    fn lift_terms_do_no_work() {
        let twist = LinkTwist { v_t: 0.7, v_n: -0.4, omega: 2.5 };
        let w = fluid_wrench(twist, &[0.0, 0.0, 0.0, 3.0, 4.0], &tail_link(), 1000.0);
        let power = w.f_t * twist.v_t + w.f_n * twist.v_n;
        assert!(power.abs() < 1e-12);
    }

    #[test]
    fn kutta_magnitude_and_sign() {
        // alpha = 45 degrees, |v| = sqrt(2): magnitude 1/2 rho c S_n * 2 * 1.
        let link = tail_link();
        let twist = LinkTwist { v_t: 1.0, v_n: 1.0, omega: 0.0 };
        let w = fluid_wrench(twist, &[0.0, 0.0, 0.0, 1.0, 0.0], &link, 1000.0);
        let expected = 0.5 * 1000.0 * link.normal_area * 2.0;
        assert!((w.f_t.hypot(w.f_n) - expected).abs() < 1e-12);
        // Opposes the growth of the normal velocity component.
        assert!(w.f_n < 0.0);
    }

    #[test]
    fn wrench_linear_in_each_coefficient() {
        let link = tail_link();
        let twist = LinkTwist { v_t: -0.35, v_n: 0.8, omega: -1.7 };
        for i in 0..5 {
            let mut c1 = [0.0; 5];
            c1[i] = 1.0;
            let mut c3 = [0.0; 5];
            c3[i] = 3.0;
            let w1 = fluid_wrench(twist, &c1, &link, 1000.0).as_array();
            let w3 = fluid_wrench(twist, &c3, &link, 1000.0).as_array();
            for k in 0..3 {
                assert!((w3[k] - 3.0 * w1[k]).abs() <= 1e-12 * w3[k].abs().max(1e-12));
            }
        }
        // and additive across coefficients
        let c = [1.0, 2.0, 3.0, 4.0, 5.0];
        let total = fluid_wrench(twist, &c, &link, 1000.0).as_array();
        let mut sum = [0.0; 3];
        for i in 0..5 {
            let mut ci = [0.0; 5];
            ci[i] = c[i];
            let w = fluid_wrench(twist, &ci, &link, 1000.0).as_array();
            for k in 0..3 {
                sum[k] += w[k];
            }
        }
        for k in 0..3 {
            assert!((total[k] - sum[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let link = tail_link();
        let c = [2.0, 7.0, 1.5, 4.0, 3.0];
        for twist in [
            LinkTwist { v_t: 0.4, v_n: -0.9, omega: 2.0 },
            LinkTwist { v_t: -1.1, v_n: 0.2, omega: -0.6 },
            LinkTwist { v_t: 0.05, v_n: 0.3, omega: 7.0 },
        ] {
            let jac = fluid_wrench_jacobian(twist, &c, &link, 1000.0);
            let h = 1e-6;
            for col in 0..3 {
                let mut plus = twist;
                let mut minus = twist;
                match col {
                    0 => {
                        plus.v_t += h;
                        minus.v_t -= h;
                    }
                    1 => {
                        plus.v_n += h;
                        minus.v_n -= h;
                    }
                    _ => {
                        plus.omega += h;
                        minus.omega -= h;
                    }
                }
                let wp = fluid_wrench(plus, &c, &link, 1000.0).as_array();
                let wm = fluid_wrench(minus, &c, &link, 1000.0).as_array();
                for row in 0..3 {
                    let fd = (wp[row] - wm[row]) / (2.0 * h);
                    assert!(
                        (fd - jac[row][col]).abs() < 1e-6 * fd.abs().max(1.0),
                        "row {row} col {col}: fd {fd} vs {}",
                        jac[row][col]
                    );
                }
            }
        }
    }
}

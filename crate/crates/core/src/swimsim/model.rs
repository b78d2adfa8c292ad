use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub const LINK_COUNT: usize = 6;
pub const JOINT_COUNT: usize = 5;
/// Generalized coordinates: base x, base y, heading, five joint angles.
pub const DOF: usize = 3 + JOINT_COUNT;

/// Fixed geometry and actuation constants of the planar swimmer.
///
/// Link 0 is the head, links 1..=5 the tail segments. Joint `j` (1-based)
/// connects link `j - 1` to link `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwimmerModel {
    pub head_length: f64,
    pub tail_link_length: f64,
    pub head_mass: f64,
    pub tail_link_mass: f64,
    /// Body depth used for the normal reference area `length * depth`.
    pub depth: f64,
    /// Tangential reference area as a fraction of the normal area.
    pub tangential_area_ratio: f64,
    pub fluid_density: f64,
    /// Torque per meter of arm length per unit drive signal (N*m / m).
    pub actuation_gain: f64,
    /// Tendon crossing pattern over the five joints.
    pub tendon_signs: [f64; JOINT_COUNT],
}

impl Default for SwimmerModel {
    fn default() -> Self {
        Self {
            head_length: 0.20,
            tail_link_length: 0.08,
            head_mass: 1.0,
            tail_link_mass: 0.1,
            depth: 0.08,
            tangential_area_ratio: 0.2,
            fluid_density: 1000.0,
            actuation_gain: 40.0,
            tendon_signs: [1.0, 1.0, -1.0, -1.0, -1.0],
        }
    }
}

/// Per-link constants derived from a [`SwimmerModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub length: f64,
    pub mass: f64,
    /// Rotational inertia about the link center (uniform rod).
    pub inertia: f64,
    pub normal_area: f64,
    pub tangential_area: f64,
}

impl SwimmerModel {
    pub fn links(&self) -> [Link; LINK_COUNT] {
        std::array::from_fn(|i| {
            let (length, mass) = if i == 0 {
                (self.head_length, self.head_mass)
            } else {
                (self.tail_link_length, self.tail_link_mass)
            };
            let normal_area = length * self.depth;
            Link {
                length,
                mass,
                inertia: mass * length * length / 12.0,
                normal_area,
                tangential_area: self.tangential_area_ratio * normal_area,
            }
        })
    }

    pub fn body_length(&self) -> f64 {
        self.head_length + JOINT_COUNT as f64 * self.tail_link_length
    }

    pub fn total_mass(&self) -> f64 {
        self.head_mass + JOINT_COUNT as f64 * self.tail_link_mass
    }

    pub fn is_valid(&self) -> bool {
        let positive = [
            self.head_length,
            self.tail_link_length,
            self.head_mass,
            self.tail_link_mass,
            self.depth,
            self.tangential_area_ratio,
            self.fluid_density,
        ];
        positive.iter().all(|v| v.is_finite() && *v > 0.0)
            && self.actuation_gain.is_finite()
            && self.tendon_signs.iter().all(|s| s.is_finite())
    }

    /// Joint torques of the crank-slider drive at time `t`:
    /// `g_j * gain * arm * sin(2 pi f t)`, scaled by `drive_sign`.
    pub fn actuation_torques(&self, t: f64, frequency: f64, arm_length: f64) -> [f64; JOINT_COUNT] {
        self.actuation_torques_signed(t, frequency, arm_length, 1.0)
    }

    pub(crate) fn actuation_torques_signed(
        &self,
        t: f64,
        frequency: f64,
        arm_length: f64,
        drive_sign: f64,
    ) -> [f64; JOINT_COUNT] {
        let drive = drive_sign * (2.0 * PI * frequency * t).sin();
        let amplitude = self.actuation_gain * arm_length;
        std::array::from_fn(|j| self.tendon_signs[j] * amplitude * drive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_totals() {
        let m = SwimmerModel::default();
        assert!((m.body_length() - 0.6).abs() < 1e-12);
        assert!((m.total_mass() - 1.5).abs() < 1e-12);
        let links = m.links();
        assert!((links.iter().map(|l| l.mass).sum::<f64>() - 1.5).abs() < 1e-12);
        assert!((links[1].normal_area - 0.0064).abs() < 1e-15);
        assert!((links[1].tangential_area - 0.00128).abs() < 1e-15);
        assert!(m.is_valid());
    }

    #[test]
    fn zero_frequency_gives_zero_torque() {
        let m = SwimmerModel::default();
        for t in [0.0, 0.3, 1.7, 4.2] {
            assert!(m.actuation_torques(t, 0.0, 0.06).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn quarter_period_torques() {
        // sin(2 pi f / (4 f)) = 1: joint 1 gets +40 * 0.06 = 2.4, joint 5 gets -2.4.
        let m = SwimmerModel::default();
        let f = 1.25;
        let tau = m.actuation_torques(1.0 / (4.0 * f), f, 0.06);
        assert!((tau[0] - 2.4).abs() < 1e-12);
        assert!((tau[1] - 2.4).abs() < 1e-12);
        assert!((tau[2] + 2.4).abs() < 1e-12);
        assert!((tau[4] + 2.4).abs() < 1e-12);
    }

    #[test]
    fn torque_linear_in_arm_length() {
        let m = SwimmerModel::default();
        for t in [0.05, 0.31, 0.77] {
            let a = m.actuation_torques(t, 1.5, 0.02);
            let b = m.actuation_torques(t, 1.5, 0.04);
            for j in 0..JOINT_COUNT {
                assert!((b[j] - 2.0 * a[j]).abs() <= 1e-15 * b[j].abs().max(1.0));
            }
        }
    }
}

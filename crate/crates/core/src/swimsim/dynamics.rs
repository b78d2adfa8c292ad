//! Planar chain dynamics in generalized coordinates.
//!
//! `q = (x, y, psi, q1..q5)`: `(x, y)` is the nose position, `psi` the
//! absolute angle of the head axis (pointing from nose toward tail), and
//! `q_j` the relative angle of joint `j`. Link `i` has absolute angle
//! `phi_i = psi + q_1 + ... + q_i`.
//!
//! Every per-link quantity goes through the link-frame Jacobian `A_i`
//! (3 x 8): rows map `qd` to the axial velocity, normal velocity and angular
//! velocity of the link center. With it,
//!
//! ```text
//! M(q)   = sum_i A_i^T diag(m_i, m_i, I_i) A_i
//! Q_f    = sum_i A_i^T wrench_i
//! Q_bias = -sum_i m_i A_i^T [a_i . e_i, a_i . n_i, 0]
//! ```
//!
//! where `a_i` is the velocity-product (centripetal) acceleration of the
//! link center.

use nalgebra::{Cholesky, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::fluid::{fluid_wrench, fluid_wrench_jacobian, FluidCoefficients, LinkTwist};
use super::model::{Link, SwimmerModel, DOF, JOINT_COUNT, LINK_COUNT};
use super::{SimError, MARKER_COUNT};
use crate::params::ParamVector;

pub type GenVec = SVector<f64, DOF>;
pub type GenMat = SMatrix<f64, DOF, DOF>;
type LinkJacobian = SMatrix<f64, 3, DOF>;

/// Joint angles at or beyond this magnitude count as divergence.
pub const JOINT_LIMIT: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwimmerState {
    pub q: [f64; DOF],
    pub qd: [f64; DOF],
    pub t: f64,
}

impl SwimmerState {
    /// Straight body at rest, nose at the origin, tail along +x.
    pub fn straight_at_rest() -> Self {
        Self {
            q: [0.0; DOF],
            qd: [0.0; DOF],
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.q.iter().all(|v| v.is_finite())
            && self.qd.iter().all(|v| v.is_finite())
    }

    pub fn joint_angles(&self) -> &[f64] {
        &self.q[3..]
    }

    /// Divergence detector: non-finite state or a joint at the limit.
    pub fn is_healthy(&self) -> bool {
        self.is_finite() && self.joint_angles().iter().all(|q| q.abs() < JOINT_LIMIT)
    }

    /// Reflection about the initial heading axis (y -> -y, angles negated).
    pub fn mirrored(&self) -> Self {
        let mut m = self.clone();
        for v in [&mut m.q, &mut m.qd] {
            for (i, x) in v.iter_mut().enumerate() {
                if i != 0 {
                    *x = -*x;
                }
            }
        }
        m
    }
}

/// The parameter-dependent constants the integrator needs each step.
#[derive(Debug, Clone, Copy)]
pub struct ChainParams {
    pub fluid: FluidCoefficients,
    pub arm_length: f64,
    pub stiffness: [f64; JOINT_COUNT],
    pub damping: [f64; JOINT_COUNT],
}

impl ChainParams {
    pub fn from_theta(theta: &ParamVector) -> Self {
        Self {
            fluid: theta.fluid(),
            arm_length: theta.arm_length(),
            stiffness: theta.stiffness(),
            damping: theta.damping(),
        }
    }
}

/// Positions, directions and Jacobians of all links at one configuration.
#[derive(Debug, Clone)]
pub(crate) struct Kinematics {
    /// Unit axis `(cos phi_i, sin phi_i)` of each link.
    dirs: [[f64; 2]; LINK_COUNT],
    /// Proximal end of each link plus the tail tip.
    joints: [[f64; 2]; LINK_COUNT + 1],
    jac: [LinkJacobian; LINK_COUNT],
}

impl Kinematics {
    pub(crate) fn new(q: &[f64; DOF], links: &[Link; LINK_COUNT]) -> Self {
        let mut phi = q[2];
        let mut dirs = [[0.0; 2]; LINK_COUNT];
        for (i, dir) in dirs.iter_mut().enumerate() {
            if i > 0 {
                phi += q[2 + i];
            }
            let (s, c) = phi.sin_cos();
            *dir = [c, s];
        }

        let mut joints = [[0.0; 2]; LINK_COUNT + 1];
        joints[0] = [q[0], q[1]];
        for i in 0..LINK_COUNT {
            joints[i + 1] = [
                joints[i][0] + links[i].length * dirs[i][0],
                joints[i][1] + links[i].length * dirs[i][1],
            ];
        }

        let mut jac = [LinkJacobian::zeros(); LINK_COUNT];
        for (i, a) in jac.iter_mut().enumerate() {
            let [c, s] = dirs[i];
            a[(0, 0)] = c;
            a[(1, 0)] = -s;
            a[(0, 1)] = s;
            a[(1, 1)] = c;
            // w accumulates d(center_i)/d(angle column), walking from link i
            // back toward the head; perp(e) = (-sin, cos).
            let mut w = [-0.5 * links[i].length * s, 0.5 * links[i].length * c];
            for j in (0..=i).rev() {
                // column 2 + j: j = 0 is psi, j >= 1 is joint j
                let col = 2 + j;
                a[(0, col)] = w[0] * c + w[1] * s;
                a[(1, col)] = -w[0] * s + w[1] * c;
                a[(2, col)] = 1.0;
                if j > 0 {
                    let prev = j - 1;
                    w[0] -= links[prev].length * dirs[prev][1];
                    w[1] += links[prev].length * dirs[prev][0];
                }
            }
        }

        Self { dirs, joints, jac }
    }

    pub(crate) fn markers(&self, links: &[Link; LINK_COUNT]) -> [[f64; 2]; MARKER_COUNT] {
        let nose = self.joints[0];
        let e = self.dirs[0];
        let head = links[0].length;
        let mut m = [[0.0; 2]; MARKER_COUNT];
        m[0] = nose;
        m[1] = [nose[0] + head / 3.0 * e[0], nose[1] + head / 3.0 * e[1]];
        m[2] = [nose[0] + 2.0 * head / 3.0 * e[0], nose[1] + 2.0 * head / 3.0 * e[1]];
        m[3..].copy_from_slice(&self.joints[1..]);
        m
    }

    fn twist(&self, i: usize, qd: &GenVec) -> LinkTwist {
        let u = self.jac[i] * qd;
        LinkTwist {
            v_t: u[0],
            v_n: u[1],
            omega: u[2],
        }
    }

    /// Centripetal acceleration of each link center, projected on the link
    /// frame `(axial, normal)`.
    fn bias_accelerations(&self, qd: &GenVec, links: &[Link; LINK_COUNT]) -> [[f64; 2]; LINK_COUNT] {
        let mut out = [[0.0; 2]; LINK_COUNT];
        let mut omega = qd[2];
        let mut acc = [0.0; 2];
        for i in 0..LINK_COUNT {
            if i > 0 {
                omega += qd[2 + i];
            }
            let w2 = omega * omega;
            let e = self.dirs[i];
            let center = [
                acc[0] - 0.5 * links[i].length * w2 * e[0],
                acc[1] - 0.5 * links[i].length * w2 * e[1],
            ];
            out[i] = [center[0] * e[0] + center[1] * e[1], -center[0] * e[1] + center[1] * e[0]];
            acc[0] -= links[i].length * w2 * e[0];
            acc[1] -= links[i].length * w2 * e[1];
        }
        out
    }
}

pub(crate) fn mass_matrix_from(kin: &Kinematics, links: &[Link; LINK_COUNT]) -> GenMat {
    let mut m = GenMat::zeros();
    for (a, link) in kin.jac.iter().zip(links) {
        let w = SMatrix::<f64, 3, 3>::from_diagonal(&SVector::<f64, 3>::new(
            link.mass,
            link.mass,
            link.inertia,
        ));
        m += a.transpose() * w * a;
    }
    m
}

/// Mass matrix of the chain at configuration `q`.
pub fn mass_matrix(q: &[f64; DOF], model: &SwimmerModel) -> GenMat {
    let links = model.links();
    mass_matrix_from(&Kinematics::new(q, &links), &links)
}

/// Kinetic energy plus hinge spring potential.
pub fn mechanical_energy(state: &SwimmerState, stiffness: &[f64; JOINT_COUNT], model: &SwimmerModel) -> f64 {
    let m = mass_matrix(&state.q, model);
    let qd = GenVec::from_row_slice(&state.qd);
    let kinetic = 0.5 * (qd.transpose() * m * qd)[(0, 0)];
    let potential: f64 = stiffness
        .iter()
        .zip(state.joint_angles())
        .map(|(k, q)| 0.5 * k * q * q)
        .sum();
    kinetic + potential
}

/// Generalized force from everything except inertia: actuation, springs,
/// dampers, fluid and the centripetal bias term.
fn generalized_force(
    kin: &Kinematics,
    state: &SwimmerState,
    qd: &GenVec,
    applied: &[f64; JOINT_COUNT],
    params: &ChainParams,
    links: &[Link; LINK_COUNT],
    rho: f64,
) -> GenVec {
    let mut f = GenVec::zeros();
    for j in 0..JOINT_COUNT {
        f[3 + j] = applied[j] - params.stiffness[j] * state.q[3 + j] - params.damping[j] * qd[3 + j];
    }
    let bias = kin.bias_accelerations(qd, links);
    for i in 0..LINK_COUNT {
        let w = fluid_wrench(kin.twist(i, qd), &params.fluid, &links[i], rho);
        let local = SVector::<f64, 3>::new(
            w.f_t - links[i].mass * bias[i][0],
            w.f_n - links[i].mass * bias[i][1],
            w.torque,
        );
        f += kin.jac[i].transpose() * local;
    }
    f
}

/// Generalized accelerations `qdd` solving `M(q) qdd = Q(q, qd)` for the given
/// applied joint torques.
pub fn forward_dynamics(
    state: &SwimmerState,
    applied: &[f64; JOINT_COUNT],
    params: &ChainParams,
    model: &SwimmerModel,
) -> Result<[f64; DOF], SimError> {
    if !state.is_finite() {
        return Err(SimError::Divergence { time: state.t });
    }
    let links = model.links();
    let kin = Kinematics::new(&state.q, &links);
    let qd = GenVec::from_row_slice(&state.qd);
    let m = mass_matrix_from(&kin, &links);
    let f = generalized_force(&kin, state, &qd, applied, params, &links, model.fluid_density);
    let chol = Cholesky::new(m).ok_or(SimError::Divergence { time: state.t })?;
    let qdd = chol.solve(&f);
    if qdd.iter().any(|v| !v.is_finite()) {
        return Err(SimError::Divergence { time: state.t });
    }
    Ok(qdd.into())
}

/// Fixed-step integrator.
///
/// Each step updates velocities first and positions second. The velocity
/// update is linearly implicit in the velocity-dependent forces (dampers and
/// fluid) and in the hinge springs:
///
/// ```text
/// (M - h dQ/dqd + h^2 K) dv = h (Q - h K qd)
/// qd' = qd + dv,   q' = q + h qd'
/// ```
///
/// For the linear spring-damper part this is backward Euler, which keeps the
/// light tail links stable for the full damping and drag range at h = 1 ms.
#[derive(Debug, Clone)]
pub struct Integrator {
    model: SwimmerModel,
    links: [Link; LINK_COUNT],
    params: ChainParams,
    frequency: f64,
    drive_sign: f64,
    dt: f64,
    steps: u64,
    t0: f64,
    state: SwimmerState,
}

impl Integrator {
    pub fn new(
        model: &SwimmerModel,
        params: ChainParams,
        frequency: f64,
        dt: f64,
        initial: SwimmerState,
        drive_sign: f64,
    ) -> Self {
        Self {
            links: model.links(),
            model: model.clone(),
            params,
            frequency,
            drive_sign,
            dt,
            steps: 0,
            t0: initial.t,
            state: initial,
        }
    }

    pub fn state(&self) -> &SwimmerState {
        &self.state
    }

    pub fn markers(&self) -> [[f64; 2]; MARKER_COUNT] {
        Kinematics::new(&self.state.q, &self.links).markers(&self.links)
    }

    pub fn energy(&self) -> f64 {
        mechanical_energy(&self.state, &self.params.stiffness, &self.model)
    }

    pub fn step(&mut self) -> Result<(), SimError> {
        let h = self.dt;
        let state = &self.state;
        let kin = Kinematics::new(&state.q, &self.links);
        let qd = GenVec::from_row_slice(&state.qd);
        let applied = self.model.actuation_torques_signed(
            state.t,
            self.frequency,
            self.params.arm_length,
            self.drive_sign,
        );
        let rho = self.model.fluid_density;

        let mut rhs = generalized_force(&kin, state, &qd, &applied, &self.params, &self.links, rho);
        let mut system = GenMat::zeros();
        for i in 0..LINK_COUNT {
            let link = &self.links[i];
            let g = fluid_wrench_jacobian(kin.twist(i, &qd), &self.params.fluid, link, rho);
            let mut w = SMatrix::<f64, 3, 3>::from_fn(|r, c| -h * g[r][c]);
            w[(0, 0)] += link.mass;
            w[(1, 1)] += link.mass;
            w[(2, 2)] += link.inertia;
            system += kin.jac[i].transpose() * w * kin.jac[i];
        }
        for j in 0..JOINT_COUNT {
            let k = self.params.stiffness[j];
            system[(3 + j, 3 + j)] += h * self.params.damping[j] + h * h * k;
            rhs[3 + j] -= h * k * qd[3 + j];
        }
        rhs *= h;

        let dv = system
            .lu()
            .solve(&rhs)
            .ok_or(SimError::Divergence { time: state.t })?;

        let mut next = state.clone();
        for i in 0..DOF {
            next.qd[i] += dv[i];
            next.q[i] += h * next.qd[i];
        }
        self.steps += 1;
        next.t = self.t0 + self.steps as f64 * h;
        if !next.is_healthy() {
            return Err(SimError::Divergence { time: next.t });
        }
        self.state = next;
        Ok(())
    }
}

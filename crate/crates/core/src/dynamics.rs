//! Second-order agent dynamics, fixed-step RK4 integration, and reference
//! trajectories.
//!
//! Every agent is a double integrator: ṗ_i = v_i, v̇_i = u_i. The plant, the
//! observers and the controller together form one continuous-time system;
//! the simulation integrates that joint system with the classic fixed-step
//! fourth-order Runge–Kutta scheme, re-evaluating all feedback laws at every
//! stage rather than holding them over the step.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Position and velocity of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub p: DVector<f64>,
    pub v: DVector<f64>,
}

impl AgentState {
    pub fn new(p: DVector<f64>, v: DVector<f64>) -> Self {
        Self { p, v }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }
}

/// One fixed-size RK4 step of ẋ = f(t, x).
pub fn rk4_step<F>(t: f64, x: &DVector<f64>, dt: f64, mut f: F) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(t, x)?;
    let k2 = f(t + dt / 2.0, &(x + &k1 * (dt / 2.0)))?;
    let k3 = f(t + dt / 2.0, &(x + &k2 * (dt / 2.0)))?;
    let k4 = f(t + dt, &(x + &k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Advance the agents one RK4 step under the acceleration law `inputs`,
/// which is re-evaluated at every integration stage.
pub fn step<F>(states: &[AgentState], t: f64, dt: f64, mut inputs: F) -> Result<Vec<AgentState>>
where
    F: FnMut(f64, &[AgentState]) -> Vec<DVector<f64>>,
{
    let n = states.len();
    let d = states[0].dim();
    let mut x = DVector::zeros(2 * n * d);
    for (i, s) in states.iter().enumerate() {
        x.rows_mut(i * d, d).copy_from(&s.p);
        x.rows_mut((n + i) * d, d).copy_from(&s.v);
    }
    let next = rk4_step(t, &x, dt, |t_stage, x_stage| {
        let stage_states: Vec<AgentState> = (0..n)
            .map(|i| {
                AgentState::new(
                    x_stage.rows(i * d, d).into_owned(),
                    x_stage.rows((n + i) * d, d).into_owned(),
                )
            })
            .collect();
        let u = inputs(t_stage, &stage_states);
        let mut dx = DVector::zeros(2 * n * d);
        for (i, u_i) in u.iter().enumerate() {
            dx.rows_mut(i * d, d)
                .copy_from(&x_stage.rows((n + i) * d, d));
            dx.rows_mut((n + i) * d, d).copy_from(u_i);
        }
        Ok(dx)
    })?;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "agent states".into(),
            t: t + dt,
        });
    }
    Ok((0..n)
        .map(|i| {
            AgentState::new(
                next.rows(i * d, d).into_owned(),
                next.rows((n + i) * d, d).into_owned(),
            )
        })
        .collect())
}

/// Desired position, velocity and acceleration of every agent at one time.
#[derive(Debug, Clone)]
pub struct ReferenceSample {
    pub p: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

/// Reference trajectory generators.
///
/// `LeaderSine` is the built-in benchmark formation: four agents in d = 3,
/// agents 2–4 pinned at three corners of a square of side `r` in the z = 0
/// plane, agent 1 oscillating sinusoidally about the fourth corner along the
/// (1, 1, 0) diagonal with amplitude r/2 and angular frequency 1/f.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceTrajectory {
    LeaderSine { r: f64, f: f64 },
    Static { positions: Vec<DVector<f64>> },
}

impl ReferenceTrajectory {
    pub fn n(&self) -> usize {
        match self {
            ReferenceTrajectory::LeaderSine { .. } => 4,
            ReferenceTrajectory::Static { positions } => positions.len(),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            ReferenceTrajectory::LeaderSine { .. } => 3,
            ReferenceTrajectory::Static { positions } => positions[0].len(),
        }
    }

    pub fn sample(&self, t: f64) -> ReferenceSample {
        match self {
            ReferenceTrajectory::LeaderSine { r, f } => {
                let phase = t / f;
                let osc = 0.5 * r * phase.sin();
                let p1 = DVector::from_column_slice(&[r + osc, r + osc, 0.0]);
                let dv = 0.5 * r / f * phase.cos();
                let v1 = DVector::from_column_slice(&[dv, dv, 0.0]);
                let du = -0.5 * r / (f * f) * phase.sin();
                let u1 = DVector::from_column_slice(&[du, du, 0.0]);
                let fixed = [
                    DVector::from_column_slice(&[0.0, *r, 0.0]),
                    DVector::from_column_slice(&[0.0, 0.0, 0.0]),
                    DVector::from_column_slice(&[*r, 0.0, 0.0]),
                ];
                let zero = DVector::zeros(3);
                ReferenceSample {
                    p: std::iter::once(p1).chain(fixed).collect(),
                    v: vec![v1, zero.clone(), zero.clone(), zero.clone()],
                    u: vec![u1, zero.clone(), zero.clone(), zero],
                }
            }
            ReferenceTrajectory::Static { positions } => {
                let zero = DVector::zeros(self.d());
                ReferenceSample {
                    p: positions.clone(),
                    v: vec![zero.clone(); positions.len()],
                    u: vec![zero; positions.len()],
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn leader_sine() -> ReferenceTrajectory {
        ReferenceTrajectory::LeaderSine {
            r: 2.0 * std::f64::consts::SQRT_2,
            f: 1.0 / std::f64::consts::TAU,
        }
    }

    #[test]
    fn free_motion_translates_at_constant_velocity() {
        let states = vec![AgentState::new(
            DVector::zeros(3),
            DVector::from_column_slice(&[1.0, 0.0, 0.0]),
        )];
        let next = step(&states, 0.0, 0.1, |_, s| vec![DVector::zeros(s[0].dim())]).unwrap();
        assert_relative_eq!(
            next[0].p,
            DVector::from_column_slice(&[0.1, 0.0, 0.0]),
            epsilon = 1e-15
        );
        assert_relative_eq!(next[0].v, states[0].v, epsilon = 1e-15);
    }

    #[test]
    fn constant_acceleration_matches_closed_form() {
        // RK4 is exact for the quadratic trajectory of a constant input.
        let u = DVector::from_column_slice(&[0.3, -0.2]);
        let mut states = vec![AgentState::new(DVector::zeros(2), DVector::zeros(2))];
        let dt = 0.25;
        for i in 0..4 {
            let u_step = u.clone();
            states = step(&states, i as f64 * dt, dt, move |_, _| vec![u_step.clone()]).unwrap();
        }
        assert_relative_eq!(states[0].p, &u * 0.5, epsilon = 1e-14);
        assert_relative_eq!(states[0].v, u, epsilon = 1e-14);
    }

    #[test]
    fn reference_samples_match_benchmark_values() {
        let r = 2.0 * std::f64::consts::SQRT_2;
        let reference = leader_sine();
        let s0 = reference.sample(0.0);
        assert_relative_eq!(
            s0.p[0],
            DVector::from_column_slice(&[r, r, 0.0]),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            s0.p[1],
            DVector::from_column_slice(&[0.0, r, 0.0]),
            epsilon = 1e-15
        );
        assert_relative_eq!(s0.p[2], DVector::zeros(3), epsilon = 1e-15);
        assert_relative_eq!(
            s0.p[3],
            DVector::from_column_slice(&[r, 0.0, 0.0]),
            epsilon = 1e-15
        );
        // v₁(0) = r/(2f) · (1, 1, 0) with r = 2√2, f = 1/(2π).
        let expected = 2.0 * std::f64::consts::SQRT_2 * std::f64::consts::PI;
        assert_relative_eq!(s0.v[0][0], expected, epsilon = 1e-12);
        assert_relative_eq!(s0.v[0][1], expected, epsilon = 1e-12);
        assert_relative_eq!(s0.v[0][2], 0.0, epsilon = 1e-15);
        for i in 1..4 {
            assert_relative_eq!(s0.v[i], DVector::zeros(3), epsilon = 0.0);
            assert_relative_eq!(s0.u[i], DVector::zeros(3), epsilon = 0.0);
        }
    }

    #[test]
    fn reference_velocity_and_acceleration_are_consistent_derivatives() {
        let reference = leader_sine();
        let h = 1e-5;
        for &t in &[0.0, 0.31, 1.7, 12.9] {
            let plus = reference.sample(t + h);
            let minus = reference.sample(t - h);
            let mid = reference.sample(t);
            for i in 0..4 {
                let v_fd = (&plus.p[i] - &minus.p[i]) / (2.0 * h);
                let u_fd = (&plus.v[i] - &minus.v[i]) / (2.0 * h);
                assert_relative_eq!(v_fd, mid.v[i], epsilon = 1e-6);
                assert_relative_eq!(u_fd, mid.u[i], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn replaying_reference_acceleration_reproduces_reference_positions() {
        let reference = leader_sine();
        let s0 = reference.sample(0.0);
        let mut states: Vec<AgentState> = (0..4)
            .map(|i| AgentState::new(s0.p[i].clone(), s0.v[i].clone()))
            .collect();
        let dt = 1e-3;
        let steps = 30_000;
        let r = reference.clone();
        for k in 0..steps {
            states = step(&states, k as f64 * dt, dt, |t, _| r.sample(t).u).unwrap();
        }
        let end = reference.sample(steps as f64 * dt);
        for (i, (s, target)) in states.iter().zip(&end.p).enumerate() {
            let drift = (&s.p - target).norm();
            assert!(drift < 1e-8, "agent {} drifted by {drift:.3e}", i + 1);
        }
    }

    #[test]
    fn non_finite_input_is_reported() {
        let states = vec![AgentState::new(DVector::zeros(2), DVector::zeros(2))];
        let err = step(&states, 0.0, 0.1, |_, _| {
            vec![DVector::from_column_slice(&[f64::NAN, 0.0])]
        })
        .unwrap_err();
        match err {
            Error::NonFinite { .. } => {}
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }
}

//! Kinematic bicycle model, discrete action grids, and expert replay.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{normalize_angle, Vec2};
use crate::scenario::{RoadObject, TRAJECTORY_LEN};

/// Hard limit on |acceleration| (m/s²).
pub const MAX_ACCEL: f64 = 6.0;
/// Hard limit on heading rate (rad/s): 40 degrees per second.
pub const MAX_HEADING_RATE: f64 = 40.0 * std::f64::consts::PI / 180.0;
/// Hard limit on |head tilt| (rad).
pub const MAX_HEAD_TILT: f64 = FRAC_PI_2;
pub const DEFAULT_V_MAX: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("steering angle {0} rad is at or beyond the tan singularity")]
    SteerOutOfRange(f64),
    #[error("acceleration {0} m/s² outside [-{MAX_ACCEL}, {MAX_ACCEL}]")]
    AccelOutOfRange(f64),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("wheelbase must be positive, got {0}")]
    BadWheelbase(f64),
    #[error("non-finite action")]
    NonFinite,
    #[error("step {0} outside trajectory range [0, {max}]", max = TRAJECTORY_LEN - 1)]
    StepOutOfRange(usize),
    #[error("invalid action grid: {0}")]
    Grid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinState {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
}

impl KinState {
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub accel: f64,
    pub steer: f64,
    #[serde(default)]
    pub head_tilt: f64,
}

impl Action {
    pub const fn new(accel: f64, steer: f64, head_tilt: f64) -> Self {
        Self { accel, steer, head_tilt }
    }

    /// Checks the benchmark's hard action bounds (tilt is clamped, not rejected).
    pub fn check_bounds(&self) -> Result<(), DynamicsError> {
        if !(self.accel.is_finite() && self.steer.is_finite() && self.head_tilt.is_finite()) {
            return Err(DynamicsError::NonFinite);
        }
        if self.accel.abs() > MAX_ACCEL {
            return Err(DynamicsError::AccelOutOfRange(self.accel));
        }
        if self.steer.abs() >= FRAC_PI_2 {
            return Err(DynamicsError::SteerOutOfRange(self.steer));
        }
        Ok(())
    }

    /// Head tilt actually applied to the view cone.
    pub fn applied_tilt(&self) -> f64 {
        self.head_tilt.clamp(-MAX_HEAD_TILT, MAX_HEAD_TILT)
    }
}

#[inline]
fn clip(v: f64, lim: f64) -> f64 {
    v.clamp(-lim, lim)
}

/// One explicit step of the kinematic bicycle model referenced at the
/// centre of gravity with the rear axle at half the wheelbase.
pub fn bicycle_step(s: &KinState, act: &Action, dt: f64, wheelbase: f64, v_max: f64) -> Result<KinState, DynamicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::BadTimeStep(dt));
    }
    if !(wheelbase > 0.0) || !wheelbase.is_finite() {
        return Err(DynamicsError::BadWheelbase(wheelbase));
    }
    if !(act.accel.is_finite() && act.steer.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    if act.steer.abs() >= FRAC_PI_2 {
        return Err(DynamicsError::SteerOutOfRange(act.steer));
    }
    let v_dot = act.accel;
    let v_bar = clip(s.speed + 0.5 * v_dot * dt, v_max);
    let tan_delta = act.steer.tan();
    let beta = (0.5 * tan_delta).atan();
    let x_dot = v_bar * (s.heading + beta).cos();
    let y_dot = v_bar * (s.heading + beta).sin();
    let theta_dot = v_bar * beta.cos() * tan_delta / wheelbase;
    Ok(KinState {
        position: Vec2::new(s.position.x + x_dot * dt, s.position.y + y_dot * dt),
        heading: normalize_angle(s.heading + theta_dot * dt),
        speed: clip(s.speed + v_dot * dt, v_max),
    })
}

/// Limits the heading change between two consecutive states to
/// `max_rate * dt`, leaving position and speed untouched.
pub fn clamp_heading_rate(prev: &KinState, next: KinState, dt: f64, max_rate: f64) -> KinState {
    let d = crate::geom::signed_angle_diff(next.heading, prev.heading);
    let lim = max_rate * dt;
    if d.abs() <= lim {
        return next;
    }
    KinState { heading: normalize_angle(prev.heading + d.clamp(-lim, lim)), ..next }
}

/// One uniformly spaced axis of the action grid, endpoints inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl Axis {
    pub const fn new(min: f64, max: f64, bins: usize) -> Self {
        Self { min, max, bins }
    }

    pub fn values(&self) -> Result<Vec<f64>, DynamicsError> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(DynamicsError::Grid(format!("bad range [{}, {}]", self.min, self.max)));
        }
        match self.bins {
            0 => Err(DynamicsError::Grid("zero bins".into())),
            1 if self.min == self.max => Ok(vec![self.min]),
            1 => Err(DynamicsError::Grid(format!("one bin cannot span [{}, {}]", self.min, self.max))),
            n => {
                let step = (self.max - self.min) / (n - 1) as f64;
                Ok((0..n).map(|i| if i == n - 1 { self.max } else { self.min + step * i as f64 }).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub accel: Axis,
    pub steer: Axis,
    pub tilt: Axis,
}

impl Default for ActionGrid {
    fn default() -> Self {
        Self { accel: Axis::new(-3.0, 2.0, 6), steer: Axis::new(-0.7, 0.7, 21), tilt: Axis::new(-1.6, 1.6, 5) }
    }
}

impl ActionGrid {
    /// Cartesian product, acceleration-major then steering then tilt.
    pub fn actions(&self) -> Result<Vec<Action>, DynamicsError> {
        let (a, s, t) = (self.accel.values()?, self.steer.values()?, self.tilt.values()?);
        let mut out = Vec::with_capacity(a.len() * s.len() * t.len());
        for &accel in &a {
            for &steer in &s {
                out.extend(t.iter().map(|&tilt| Action::new(accel, steer, tilt)));
            }
        }
        if let Some(bad) = out.iter().find(|act| act.check_bounds().is_err()) {
            return Err(DynamicsError::Grid(format!("action {bad:?} outside hard bounds")));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.accel.bins * self.steer.bins * self.tilt.bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The stored expert state at step `t`, or `None` where the expert is absent.
pub fn replay_step(obj: &RoadObject, t: usize) -> Result<Option<KinState>, DynamicsError> {
    if t >= TRAJECTORY_LEN {
        return Err(DynamicsError::StepOutOfRange(t));
    }
    let tr = &obj.expert;
    Ok(tr.is_valid(t).then(|| KinState { position: tr.positions[t], heading: tr.headings[t], speed: tr.velocities[t].norm() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::straight_object;
    use proptest::prelude::*;

    const L: f64 = 4.0;

    fn st(x: f64, y: f64, h: f64, v: f64) -> KinState {
        KinState { position: Vec2::new(x, y), heading: h, speed: v }
    }

    #[test]
    fn straight_line() {
        let n = bicycle_step(&st(0.0, 0.0, 0.0, 10.0), &Action::new(0.0, 0.0, 0.0), 0.1, L, DEFAULT_V_MAX).unwrap();
        assert!((n.position.x - 1.0).abs() < 1e-12 && n.position.y.abs() < 1e-12);
        assert_eq!(n.heading, 0.0);
        assert_eq!(n.speed, 10.0);
    }

    #[test]
    fn worked_turn() {
        let n = bicycle_step(&st(0.0, 0.0, 0.0, 10.0), &Action::new(0.0, 0.2, 0.0), 0.1, L, DEFAULT_V_MAX).unwrap();
        assert!((n.position.x - 0.994903).abs() < 1e-5);
        assert!((n.position.y - 0.100839).abs() < 1e-5);
        assert!((n.heading - 0.0504193).abs() < 1e-5);
    }

    #[test]
    fn speed_saturates() {
        let n = bicycle_step(&st(0.0, 0.0, 0.0, 30.0), &Action::new(6.0, 0.0, 0.0), 0.1, L, 30.0).unwrap();
        assert_eq!(n.speed, 30.0);
        assert!((n.position.x - 3.0).abs() < 1e-12);
    }

    #[test]
    fn singular_steer_rejected() {
        let r = bicycle_step(&st(0.0, 0.0, 0.0, 1.0), &Action::new(0.0, FRAC_PI_2, 0.0), 0.1, L, DEFAULT_V_MAX);
        assert_eq!(r, Err(DynamicsError::SteerOutOfRange(FRAC_PI_2)));
        assert!(bicycle_step(&st(0.0, 0.0, 0.0, 1.0), &Action::default(), 0.0, L, 1.0).is_err());
    }

    #[test]
    fn default_grid() {
        let g = ActionGrid::default();
        let acts = g.actions().unwrap();
        assert_eq!(acts.len(), 630);
        let acc = g.accel.values().unwrap();
        assert_eq!(acc.first(), Some(&-3.0));
        assert_eq!(acc.last(), Some(&2.0));
        assert!(acc.windows(2).all(|w| (w[1] - w[0] - 1.0).abs() < 1e-12));
        let steer = g.steer.values().unwrap();
        assert!(steer.windows(2).all(|w| (w[1] - w[0] - 0.07).abs() < 1e-12));
        assert!(steer[10].abs() < 1e-12);
    }

    #[test]
    fn single_bin_tilt() {
        let g = ActionGrid { tilt: Axis::new(0.0, 0.0, 1), ..Default::default() };
        assert!(g.actions().unwrap().iter().all(|a| a.head_tilt == 0.0));
        let bad = ActionGrid { tilt: Axis::new(-1.0, 1.0, 1), ..Default::default() };
        assert!(matches!(bad.actions(), Err(DynamicsError::Grid(_))));
    }

    #[test]
    fn tilt_clamped_to_quarter_turn() {
        assert_eq!(Action::new(0.0, 0.0, 1.6).applied_tilt(), FRAC_PI_2);
        assert_eq!(Action::new(0.0, 0.0, -1.6).applied_tilt(), -FRAC_PI_2);
        assert_eq!(Action::new(0.0, 0.0, 0.4).applied_tilt(), 0.4);
    }

    #[test]
    fn replay_examples() {
        let mut o = straight_object(1, Vec2::ZERO, 0.0, 2.0);
        for t in (0..TRAJECTORY_LEN).step_by(3) {
            o.expert.valid[t] = false;
        }
        for t in 0..TRAJECTORY_LEN {
            match replay_step(&o, t).unwrap() {
                Some(k) => {
                    assert!(o.expert.valid[t]);
                    assert_eq!(k.position, o.expert.positions[t]);
                }
                None => assert!(!o.expert.valid[t]),
            }
        }
        assert_eq!(replay_step(&o, 91), Err(DynamicsError::StepOutOfRange(91)));
    }

    #[test]
    fn heading_rate_clamp_holds_for_grid() {
        let grid = ActionGrid::default().actions().unwrap();
        for v in [-20.0, -1.0, 0.0, 3.0, 15.0, 40.0] {
            for a in &grid {
                let s = st(0.0, 0.0, 3.1, v);
                let n = bicycle_step(&s, a, 0.1, 4.5, DEFAULT_V_MAX).unwrap();
                let c = clamp_heading_rate(&s, n, 0.1, MAX_HEADING_RATE);
                assert!(crate::geom::min_angle(c.heading, s.heading) <= MAX_HEADING_RATE * 0.1 + 1e-12);
                assert_eq!(c.position, n.position);
            }
        }
    }

    #[test]
    fn integrator_is_continuous() {
        // Undo a small step with a brute-force search over the reverse action.
        let s0 = st(0.0, 0.0, 0.3, 5.0);
        let fwd = bicycle_step(&s0, &Action::new(1.0, 0.1, 0.0), 0.01, L, DEFAULT_V_MAX).unwrap();
        let rev = KinState { speed: -fwd.speed, ..fwd };
        let mut best = f64::INFINITY;
        for i in 0..=40 {
            for j in 0..=40 {
                let act = Action::new(-2.0 + 0.1 * i as f64, -0.2 + 0.01 * j as f64, 0.0);
                let back = bicycle_step(&rev, &act, 0.01, L, DEFAULT_V_MAX).unwrap();
                best = best.min(back.position.distance(s0.position));
            }
        }
        assert!(best < 1e-3, "closest return {best}");
    }

    proptest! {
        #[test]
        fn zero_steer_keeps_heading(h in -3.1..3.1f64, v in -30.0..30.0f64, a in -6.0..6.0f64) {
            let n = bicycle_step(&st(1.0, 2.0, h, v), &Action::new(a, 0.0, 0.0), 0.1, L, DEFAULT_V_MAX).unwrap();
            prop_assert_eq!(n.heading, h);
        }

        #[test]
        fn mirrored_steer_mirrors_motion(v in -30.0..30.0f64, a in -6.0..6.0f64, d in 0.0..1.2f64) {
            let s = st(0.0, 0.0, 0.0, v);
            let l = bicycle_step(&s, &Action::new(a, d, 0.0), 0.1, L, DEFAULT_V_MAX).unwrap();
            let r = bicycle_step(&s, &Action::new(a, -d, 0.0), 0.1, L, DEFAULT_V_MAX).unwrap();
            prop_assert_eq!(l.position.x, r.position.x);
            prop_assert_eq!(l.position.y, -r.position.y);
            prop_assert_eq!(l.heading, -r.heading);
        }
    }
}

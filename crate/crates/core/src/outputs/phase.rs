use nalgebra::{DVector, RowDVector};

use crate::{Error, Real, Result};

/// How the desired trajectories advance.
#[derive(Debug, Clone, PartialEq)]
pub enum Phase<T: Real> {
    /// `τ = (t − start)/(end − start)`.
    Time { start: T, end: T },
    /// `τ = (p(q) − initial)/rate` where `p` is the configuration-level
    /// quantity behind relative-degree-1 output `output`.
    State { output: usize, initial: T, rate: T },
}

impl<T: Real> Phase<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            Phase::Time { start, end } if !(*end > *start) => Err(Error::Config(format!(
                "outputs.phase: end time {} must exceed start {}",
                end.as_f64(),
                start.as_f64()
            ))),
            Phase::State { rate, .. } if *rate == T::zero() || !rate.is_finite_value() => {
                Err(Error::Config("outputs.phase: state-based rate must be finite and nonzero".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Phase value and its derivatives along the current state.
#[derive(Debug, Clone)]
pub struct PhaseState<T: Real> {
    /// Unclamped phase.
    pub raw: T,
    pub tau: T,
    pub clamped: bool,
    /// `dτ/dt`.
    pub rate: T,
    /// `∂τ/∂q`; `τ̈ = grad·q̈ + accel_bias`.
    pub grad: RowDVector<T>,
    pub accel_bias: T,
}

/// Configuration-level quantity driving a state-based phase: its value,
/// Jacobian row and `J̇q̇`.
pub struct PhaseDriver<'a, T: Real> {
    pub value: T,
    pub jacobian: &'a RowDVector<T>,
    pub jdot_qdot: T,
}

/// Evaluates `τ` and its time derivatives. Outside `[0, 1]` the phase is
/// clamped and its derivatives vanish.
pub fn eval_phase<T: Real>(
    phase: &Phase<T>,
    t: T,
    qd: &DVector<T>,
    driver: Option<PhaseDriver<'_, T>>,
) -> PhaseState<T> {
    let n = qd.len();
    let (raw, rate, grad, accel_bias) = match phase {
        Phase::Time { start, end } => {
            let span = *end - *start;
            ((t - *start) / span, T::one() / span, RowDVector::zeros(n), T::zero())
        }
        Phase::State { initial, rate, .. } => {
            let d = driver.expect("state-based phase needs a driving output");
            let grad = d.jacobian / *rate;
            (
                (d.value - *initial) / *rate,
                (&grad * qd)[0],
                grad,
                d.jdot_qdot / *rate,
            )
        }
    };
    let inside = raw >= T::zero() && raw <= T::one();
    if !inside {
        log::debug!("phase {:.6e} outside [0, 1], clamping", raw.as_f64());
        return PhaseState {
            raw,
            tau: raw.max(T::zero()).min(T::one()),
            clamped: true,
            rate: T::zero(),
            grad: RowDVector::zeros(n),
            accel_bias: T::zero(),
        };
    }
    PhaseState {
        raw,
        tau: raw,
        clamped: false,
        rate,
        grad,
        accel_bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn time(t: f64) -> f64 {
        eval_phase(&Phase::Time { start: 0.0, end: 2.0 }, t, &DVector::zeros(1), None).tau
    }

    #[test]
    fn time_phase_midpoint_and_start() {
        assert_eq!(time(1.0), 0.5);
        assert_eq!(time(0.0), 0.0);
        assert_eq!(time(5.0), 1.0);
        assert_eq!(time(-1.0), 0.0);
    }

    #[test]
    fn state_phase_is_linear_in_the_driver() {
        let phase = Phase::State {
            output: 0,
            initial: 0.4,
            rate: 0.8,
        };
        let jac = RowDVector::from_row_slice(&[1.0, 0.0]);
        let qd = DVector::from_vec(vec![0.8, 0.0]);
        let ps: PhaseState<f64> = eval_phase(
            &phase,
            0.0,
            &qd,
            Some(PhaseDriver {
                value: 0.4 + 0.8 * 0.3,
                jacobian: &jac,
                jdot_qdot: 0.0,
            }),
        );
        assert!((ps.tau - 0.3).abs() < 1e-15);
        assert!((ps.rate - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_phases_are_rejected() {
        assert!(Phase::Time { start: 1.0, end: 1.0 }.validate().is_err());
        assert!(Phase::State { output: 0, initial: 0.0, rate: 0.0 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn time_phase_is_nondecreasing(a in -3.0..6.0f64, b in -3.0..6.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(time(lo) <= time(hi));
        }

        #[test]
        fn state_phase_is_nondecreasing_when_driver_advances(p0 in -1.0..1.0f64, d1 in 0.0..1.0f64, d2 in 0.0..1.0f64, rate in 0.1..2.0f64) {
            let phase = Phase::State { output: 0, initial: p0, rate };
            let jac = RowDVector::from_row_slice(&[1.0]);
            let qd = DVector::from_vec(vec![rate]);
            let at = |v: f64| eval_phase(&phase, 0.0, &qd, Some(PhaseDriver { value: v, jacobian: &jac, jdot_qdot: 0.0 })).tau;
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(at(p0 + lo * rate) <= at(p0 + hi * rate));
        }
    }
}

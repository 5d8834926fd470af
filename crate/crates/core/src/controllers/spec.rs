use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Real, Result};

/// Controller family member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Input-output feedback linearization.
    Fbl,
    ClfQp,
    ClfQpDelta,
    IdQp,
    IdClfQp,
    IdClfQpDelta,
    IdClfQpPlus,
    IdClfQpPlusDelta,
    /// Convergence incentive in the cost only; no CLF inequality.
    IdClfQpPlusRelaxed,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Fbl,
        Variant::ClfQp,
        Variant::ClfQpDelta,
        Variant::IdQp,
        Variant::IdClfQp,
        Variant::IdClfQpDelta,
        Variant::IdClfQpPlus,
        Variant::IdClfQpPlusDelta,
        Variant::IdClfQpPlusRelaxed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fbl => "fbl",
            Variant::ClfQp => "clf_qp",
            Variant::ClfQpDelta => "clf_qp_delta",
            Variant::IdQp => "id_qp",
            Variant::IdClfQp => "id_clf_qp",
            Variant::IdClfQpDelta => "id_clf_qp_delta",
            Variant::IdClfQpPlus => "id_clf_qp_plus",
            Variant::IdClfQpPlusDelta => "id_clf_qp_plus_delta",
            Variant::IdClfQpPlusRelaxed => "id_clf_qp_plus_relaxed",
        }
    }

    pub fn from_name(name: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == name)
    }

    /// Works on `u` alone with `λ` eliminated and `D` inverted.
    pub fn is_classical(self) -> bool {
        matches!(self, Variant::Fbl | Variant::ClfQp | Variant::ClfQpDelta)
    }

    pub fn has_delta(self) -> bool {
        matches!(self, Variant::ClfQpDelta | Variant::IdClfQpDelta | Variant::IdClfQpPlusDelta)
    }

    pub fn is_plus(self) -> bool {
        matches!(self, Variant::IdClfQpPlus | Variant::IdClfQpPlusDelta | Variant::IdClfQpPlusRelaxed)
    }

    /// Imposes `V̇ ≤ −γV` (possibly relaxed by δ) as a QP row.
    pub fn has_clf_constraint(self) -> bool {
        matches!(
            self,
            Variant::ClfQp
                | Variant::ClfQpDelta
                | Variant::IdClfQp
                | Variant::IdClfQpDelta
                | Variant::IdClfQpPlus
                | Variant::IdClfQpPlusDelta
        )
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How `J q̈ + J̇ q̇ = 0` enters the inverse-dynamics QPs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Holonomic<T> {
    Hard,
    /// Weighted least-squares penalty.
    Soft(T),
}

/// Target for the output accelerations in the ID-CLF-QP tracking cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputReference {
    /// `‖J̇_y q̇ + J_y q̈‖²`.
    Zero,
    /// `‖J̇_y q̇ + J_y q̈ − v‖²` with `v` the ε-scaled CLF feedback.
    Feedback,
}

/// `W(𝒳) = u·‖u‖² + qdd·‖q̈‖² + lambda·‖λ‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationWeights<T> {
    pub u: T,
    pub qdd: T,
    pub lambda: T,
}

/// Preferred linear relation `a 𝒳 = b` added to the cost as
/// `weight ‖a 𝒳 − b‖²`. Columns follow the variant's [`DecisionLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct SoftConstraint<T: Real> {
    pub label: String,
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub weight: T,
}

impl<T: Real> SoftConstraint<T> {
    pub fn new(label: impl Into<String>, a: DMatrix<T>, b: DVector<T>, weight: T) -> Result<Self> {
        let label = label.into();
        if a.nrows() != b.len() {
            return Err(Error::Config(format!(
                "controller.soft.{label}: {} rows but {} right-hand sides",
                a.nrows(),
                b.len()
            )));
        }
        if !(weight > T::zero()) {
            return Err(Error::Config(format!("controller.soft.{label}: weight must be positive")));
        }
        Ok(SoftConstraint { label, a, b, weight })
    }

    pub fn penalty(&self, x: &DVector<T>) -> T {
        (&self.a * x - &self.b).norm_squared() * self.weight
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSpec<T: Real> {
    pub variant: Variant,
    /// Weight σ of the regularization `W(𝒳)`.
    pub sigma: T,
    /// Penalty ρ on δ².
    pub rho: T,
    pub weights: RegularizationWeights<T>,
    /// Scale of the `L_G V J_y q̈` cost term of the plus variants.
    pub vdot_weight: T,
    pub torque_limits: bool,
    pub friction: bool,
    pub rollover: bool,
    pub holonomic: Holonomic<T>,
    /// Weight of the soft torque-rate term `‖u − u_prev‖²`.
    pub torque_rate: Option<T>,
    pub output_reference: OutputReference,
    /// User-supplied soft constraints over the full decision vector.
    pub soft: Vec<SoftConstraint<T>>,
}

impl<T: Real> ControllerSpec<T> {
    pub fn new(variant: Variant) -> Self {
        ControllerSpec {
            variant,
            sigma: T::lit(1e-5),
            rho: T::lit(100.0),
            weights: RegularizationWeights {
                u: T::one(),
                qdd: T::lit(1e-2),
                lambda: T::lit(1e-2),
            },
            vdot_weight: T::one(),
            torque_limits: true,
            friction: true,
            rollover: true,
            holonomic: Holonomic::Hard,
            torque_rate: None,
            output_reference: OutputReference::Zero,
            soft: Vec::new(),
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        ControllerSpec { variant, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::Config(format!("controller.{key}: {why}")));
        if !(self.sigma > T::zero()) {
            return bad("sigma", "must be positive");
        }
        if !(self.rho > T::zero()) {
            return bad("rho", "must be positive");
        }
        let w = &self.weights;
        if !(w.u >= T::zero() && w.qdd >= T::zero() && w.lambda >= T::zero()) {
            return bad("weights", "must be nonnegative");
        }
        if !(w.u > T::zero() || w.qdd > T::zero()) {
            return bad("weights", "u and qdd weights cannot both be zero");
        }
        if !(self.vdot_weight >= T::zero()) {
            return bad("vdot_weight", "must be nonnegative");
        }
        if let Holonomic::Soft(wh) = self.holonomic {
            if !(wh > T::zero()) {
                return bad("holonomic_weight", "must be positive");
            }
        }
        if let Some(wr) = self.torque_rate {
            if !(wr > T::zero()) {
                return bad("torque_rate_weight", "must be positive");
            }
        }
        for c in &self.soft {
            SoftConstraint::new(c.label.clone(), c.a.clone(), c.b.clone(), c.weight)?;
        }
        Ok(())
    }
}

/// Placement of the blocks of the decision vector `𝒳 = (q̈, u, λ[, δ])`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionLayout {
    pub qdd: Range<usize>,
    pub u: Range<usize>,
    pub lambda: Range<usize>,
    pub delta: Option<usize>,
    pub n_x: usize,
}

impl DecisionLayout {
    /// Full inverse-dynamics layout.
    pub fn inverse_dynamics(n_q: usize, n_u: usize, n_h: usize, delta: bool) -> Self {
        let base = n_q + n_u + n_h;
        DecisionLayout {
            qdd: 0..n_q,
            u: n_q..n_q + n_u,
            lambda: n_q + n_u..base,
            delta: delta.then_some(base),
            n_x: base + usize::from(delta),
        }
    }

    /// Torque-only layout of the classical CLF-QP.
    pub fn torque_only(n_u: usize, delta: bool) -> Self {
        DecisionLayout {
            qdd: 0..0,
            u: 0..n_u,
            lambda: n_u..n_u,
            delta: delta.then_some(n_u),
            n_x: n_u + usize::from(delta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::from_name(v.name()), Some(v));
        }
        assert_eq!(Variant::from_name("lqr"), None);
    }

    #[test]
    fn layouts_are_contiguous() {
        let l = DecisionLayout::inverse_dynamics(6, 3, 3, true);
        assert_eq!((l.qdd.end, l.u.start, l.u.end, l.lambda.start), (6, 6, 9, 9));
        assert_eq!(l.delta, Some(12));
        assert_eq!(l.n_x, 13);
        let c = DecisionLayout::torque_only(2, false);
        assert_eq!(c.n_x, 2);
        assert!(c.qdd.is_empty() && c.lambda.is_empty());
    }

    #[test]
    fn nonpositive_sigma_is_rejected() {
        let mut s = ControllerSpec::<f64>::new(Variant::IdClfQp);
        s.sigma = 0.0;
        assert!(matches!(s.validate(), Err(Error::Config(m)) if m.contains("sigma")));
    }

    #[test]
    fn soft_constraint_penalty_is_weighted_squared_residual() {
        let c = SoftConstraint::new("pair", DMatrix::from_row_slice(1, 2, &[1.0, -1.0]), DVector::from_vec(vec![1.0]), 3.0)
            .unwrap();
        assert_eq!(c.penalty(&DVector::from_vec(vec![2.0, 0.0])), 3.0);
        assert_eq!(c.penalty(&DVector::from_vec(vec![1.0, 0.0])), 0.0);
        assert!(SoftConstraint::new("bad", DMatrix::<f64>::zeros(2, 2), DVector::zeros(1), 1.0).is_err());
        assert!(SoftConstraint::new("bad", DMatrix::<f64>::zeros(1, 2), DVector::zeros(1), 0.0).is_err());
    }
}

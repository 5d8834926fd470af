use nalgebra::{DMatrix, DVector, RowDVector};

use super::spec::{ControllerSpec, DecisionLayout, Holonomic, OutputReference, Variant};
use crate::dynamics::{
    eval_dynamics, vector_fields_from_terms, ConstraintForceMap, ConstraintKind, DynamicsTerms, HolonomicConstraint,
    LambdaMode, RobotModel,
};
use crate::linalg::{self, MAX_CONDITION};
use crate::outputs::{OutputEval, OutputSet};
use crate::qp::QpProblem;
use crate::resclf::ResClf;
use crate::{Error, Real, Result};

/// Everything a controller needs at one state: output error, dynamics terms
/// and the Lyapunov quantities.
#[derive(Debug, Clone)]
pub struct TickContext<T: Real> {
    pub q: DVector<T>,
    pub qd: DVector<T>,
    pub t: T,
    pub outputs: OutputEval<T>,
    pub terms: DynamicsTerms<T>,
    pub v: T,
    pub lfv: T,
    pub lgv: RowDVector<T>,
}

impl<T: Real> TickContext<T> {
    pub fn new(
        model: &dyn RobotModel<T>,
        outputs: &OutputSet<T>,
        clf: &ResClf<T>,
        q: &DVector<T>,
        qd: &DVector<T>,
        t: T,
    ) -> Result<Self> {
        let terms = eval_dynamics(model, q, qd)?;
        let out = outputs.evaluate(model, q, qd, t)?;
        if out.eta.len() != clf.dynamics().dim() {
            return Err(Error::arg(format!(
                "CLF built for {} error states, outputs produce {}",
                clf.dynamics().dim(),
                out.eta.len()
            )));
        }
        let (v, lfv, lgv) = clf.lyapunov_terms(&out.eta);
        Ok(TickContext {
            q: q.clone(),
            qd: qd.clone(),
            t,
            outputs: out,
            terms,
            v,
            lfv,
            lgv,
        })
    }

    /// `(ẏ₁, ÿ₂) = J_y q̈ + J̇_y q̇`.
    pub fn output_accel(&self, qdd: &DVector<T>) -> DVector<T> {
        &self.outputs.jacobian * qdd + &self.outputs.jdot_qdot
    }

    /// `V̇ = L_F V + L_G V (J_y q̈ + J̇_y q̇)`.
    pub fn vdot(&self, qdd: &DVector<T>) -> T {
        self.lfv + (&self.lgv * self.output_accel(qdd))[0]
    }

    /// The `q̈`-dependent part `L_G V J_y q̈` of `V̇`.
    pub fn vdot_qdd_term(&self, qdd: &DVector<T>) -> T {
        (&self.lgv * (&self.outputs.jacobian * qdd))[0]
    }
}

/// Friction-pyramid and rollover rows `R λ_c ≤ 0` over one contact's `λ`
/// entries: `λ_z ≥ 0`, `|λ_x|, |λ_y| ≤ (μ/√2) λ_z`, `|λ_mx| ≤ (l/2) λ_z`,
/// `|λ_my| ≤ (w/2) λ_z`.
pub fn friction_pyramid_rows<T: Real>(
    contact: &HolonomicConstraint<T>,
    friction: bool,
    rollover: bool,
) -> Result<DMatrix<T>> {
    let g = contact
        .contact
        .as_ref()
        .ok_or_else(|| Error::Config(format!("constraint {}: contact geometry is missing", contact.label)))?;
    let mut rows: Vec<RowDVector<T>> = Vec::new();
    let mut push = |i: usize, si: T, scale: T| {
        let mut r = RowDVector::zeros(contact.dim);
        r[i] = si;
        r[g.normal] = -scale;
        rows.push(r);
    };
    if friction || rollover {
        push(g.normal, T::zero(), T::one());
    }
    if friction {
        let k = g.mu / T::lit(2.0).sqrt();
        for i in [g.tangent_x, g.tangent_y].into_iter().flatten() {
            push(i, T::one(), k);
            push(i, -T::one(), k);
        }
    }
    if rollover {
        let half = T::lit(0.5);
        for (i, size) in [(g.moment_length, g.length), (g.moment_width, g.width)] {
            if let Some(i) = i {
                push(i, T::one(), half * size);
                push(i, -T::one(), half * size);
            }
        }
    }
    let mut m = DMatrix::zeros(rows.len(), contact.dim);
    for (k, r) in rows.iter().enumerate() {
        m.set_row(k, r);
    }
    Ok(m)
}

/// Contact rows for every contact constraint of `model`, over the stacked `λ`.
pub fn contact_rows<T: Real>(model: &dyn RobotModel<T>, friction: bool, rollover: bool) -> Result<DMatrix<T>> {
    let n_h = model.n_constraints();
    let mut blocks = Vec::new();
    for (c, off) in model.constraints().iter().zip(model.constraint_offsets()) {
        if c.kind != ConstraintKind::Contact {
            continue;
        }
        let local = friction_pyramid_rows(c, friction, rollover)?;
        let mut full = DMatrix::zeros(local.nrows(), n_h);
        full.view_mut((0, off), (local.nrows(), c.dim)).copy_from(&local);
        blocks.push(full);
    }
    Ok(linalg::stack_rows(&blocks, n_h))
}

/// Output dynamics with `λ` eliminated: `(ẏ₁, ÿ₂) = L_f + A u`.
#[derive(Debug, Clone)]
pub struct ClassicalTerms<T: Real> {
    /// Decoupling matrix.
    pub a: DMatrix<T>,
    pub lf: DVector<T>,
    pub qdd_drift: DVector<T>,
    pub qdd_input: DMatrix<T>,
    pub forces: ConstraintForceMap<T>,
}

pub fn classical_terms<T: Real>(ctx: &TickContext<T>) -> Result<ClassicalTerms<T>> {
    let fields = vector_fields_from_terms(&ctx.terms, &ctx.qd, LambdaMode::Eliminate)?;
    let (f2, g2) = (fields.drift_accel(), fields.input_accel());
    let jy = &ctx.outputs.jacobian;
    let a = jy * &g2;
    if a.nrows() != a.ncols() {
        return Err(Error::arg(format!(
            "classical controllers need as many outputs as actuators ({} outputs, {} actuators)",
            a.nrows(),
            a.ncols()
        )));
    }
    let cond = linalg::condition(&a);
    if !(cond <= T::lit(MAX_CONDITION)) {
        return Err(Error::Singular {
            what: "decoupling matrix".into(),
            cond: cond.as_f64(),
        });
    }
    let lf = jy * &f2 + &ctx.outputs.jdot_qdot;
    Ok(ClassicalTerms {
        a,
        lf,
        qdd_drift: f2,
        qdd_input: g2,
        forces: fields.forces,
    })
}

/// Feedback-linearizing torque `u = A⁻¹(−L_f + v)` with `v` the ε-scaled
/// CLF feedback.
pub fn fbl_control<T: Real>(
    model: &dyn RobotModel<T>,
    outputs: &OutputSet<T>,
    clf: &ResClf<T>,
    q: &DVector<T>,
    qd: &DVector<T>,
    t: T,
) -> Result<DVector<T>> {
    let ctx = TickContext::new(model, outputs, clf, q, qd, t)?;
    fbl_from_context(&ctx, clf)
}

pub(crate) fn fbl_from_context<T: Real>(ctx: &TickContext<T>, clf: &ResClf<T>) -> Result<DVector<T>> {
    let ct = classical_terms(ctx)?;
    let v = clf.feedback(&ctx.outputs.eta);
    linalg::solve_vec(&ct.a, &(v - &ct.lf), "decoupling matrix")
}

/// A QP together with the map back to `(q̈, u, λ, δ)`.
#[derive(Debug, Clone)]
pub struct Assembled<T: Real> {
    pub problem: QpProblem<T>,
    pub layout: DecisionLayout,
    classical: Option<ClassicalTerms<T>>,
}

/// Decision vector split into its physical parts.
#[derive(Debug, Clone)]
pub struct Decoded<T: Real> {
    pub qdd: DVector<T>,
    pub u: DVector<T>,
    pub lambda: DVector<T>,
    pub delta: T,
}

impl<T: Real> Assembled<T> {
    pub fn decode(&self, x: &DVector<T>) -> Decoded<T> {
        let l = &self.layout;
        let u = x.rows(l.u.start, l.u.len()).into_owned();
        let delta = l.delta.map_or(T::zero(), |i| x[i]);
        match &self.classical {
            Some(ct) => Decoded {
                qdd: &ct.qdd_drift + &ct.qdd_input * &u,
                lambda: ct.forces.eval(&u),
                u,
                delta,
            },
            None => Decoded {
                qdd: x.rows(l.qdd.start, l.qdd.len()).into_owned(),
                lambda: x.rows(l.lambda.start, l.lambda.len()).into_owned(),
                u,
                delta,
            },
        }
    }
}

/// Incremental QP construction over a fixed layout.
struct Builder<T: Real> {
    layout: DecisionLayout,
    h: DMatrix<T>,
    f: DVector<T>,
    eq: Vec<(RowDVector<T>, T)>,
    ineq: Vec<(RowDVector<T>, T)>,
    lower: DVector<T>,
    upper: DVector<T>,
}

impl<T: Real> Builder<T> {
    fn new(layout: DecisionLayout) -> Self {
        let n = layout.n_x;
        Builder {
            layout,
            h: DMatrix::zeros(n, n),
            f: DVector::zeros(n),
            eq: Vec::new(),
            ineq: Vec::new(),
            lower: DVector::from_element(n, -T::infinity()),
            upper: DVector::from_element(n, T::infinity()),
        }
    }

    /// Adds `w ‖a 𝒳 − b‖²` to the cost.
    fn least_squares(&mut self, a: &DMatrix<T>, b: &DVector<T>, w: T) {
        let two_w = T::lit(2.0) * w;
        self.h += a.transpose() * a * two_w;
        self.f -= a.transpose() * b * two_w;
    }

    /// Embeds `block` into a full-width matrix starting at column `start`.
    fn widen(&self, block: &DMatrix<T>, start: usize) -> DMatrix<T> {
        let mut m = DMatrix::zeros(block.nrows(), self.layout.n_x);
        m.view_mut((0, start), block.shape()).copy_from(block);
        m
    }

    fn diagonal(&mut self, start: usize, len: usize, w: T) {
        for i in start..start + len {
            self.h[(i, i)] += T::lit(2.0) * w;
        }
    }

    fn torque_bounds(&mut self, model: &dyn RobotModel<T>) {
        for (k, (lo, hi)) in model.torque_limits().into_iter().enumerate() {
            self.lower[self.layout.u.start + k] = lo;
            self.upper[self.layout.u.start + k] = hi;
        }
    }

    fn torque_rate(&mut self, spec: &ControllerSpec<T>, prev_u: Option<&DVector<T>>) {
        if let (Some(w), Some(prev)) = (spec.torque_rate, prev_u) {
            let n_u = self.layout.u.len();
            let a = self.widen(&DMatrix::identity(n_u, n_u), self.layout.u.start);
            self.least_squares(&a, prev, w);
        }
    }

    fn soft(&mut self, spec: &ControllerSpec<T>) -> Result<()> {
        for c in &spec.soft {
            if c.a.ncols() != self.layout.n_x {
                return Err(Error::Config(format!(
                    "controller.soft.{}: {} columns but the {} decision vector has {}",
                    c.label,
                    c.a.ncols(),
                    spec.variant,
                    self.layout.n_x
                )));
            }
            self.least_squares(&c.a, &c.b, c.weight);
        }
        Ok(())
    }

    fn delta_penalty(&mut self, rho: T) {
        if let Some(d) = self.layout.delta {
            self.h[(d, d)] += T::lit(2.0) * rho;
        }
    }

    fn finish(self, classical: Option<ClassicalTerms<T>>) -> Assembled<T> {
        let n = self.layout.n_x;
        let rows = |v: &[(RowDVector<T>, T)]| {
            let mut a = DMatrix::zeros(v.len(), n);
            let mut b = DVector::zeros(v.len());
            for (k, (r, rhs)) in v.iter().enumerate() {
                a.set_row(k, r);
                b[k] = *rhs;
            }
            (a, b)
        };
        let (a_eq, b_eq) = rows(&self.eq);
        let (a_in, b_in) = rows(&self.ineq);
        let problem = QpProblem::new(linalg::symmetrize(&self.h), self.f)
            .with_equalities(a_eq, b_eq)
            .with_inequalities(a_in, b_in)
            .with_bounds(self.lower, self.upper);
        Assembled {
            problem,
            layout: self.layout,
            classical,
        }
    }
}

/// Classical CLF-QP over `u` (and δ for the relaxed-rate variant):
/// cost `‖A u + L_f‖² (+ ρδ²)`, constraint `L_F V + L_G V (L_f + A u) ≤ −γV (+δ)`.
pub fn assemble_clf_qp<T: Real>(
    model: &dyn RobotModel<T>,
    ctx: &TickContext<T>,
    clf: &ResClf<T>,
    spec: &ControllerSpec<T>,
    prev_u: Option<&DVector<T>>,
) -> Result<Assembled<T>> {
    let ct = classical_terms(ctx)?;
    let n_u = model.n_u();
    let mut b = Builder::new(DecisionLayout::torque_only(n_u, spec.variant.has_delta()));
    let a_wide = b.widen(&ct.a, 0);
    b.least_squares(&a_wide, &(-&ct.lf), T::one());
    b.delta_penalty(spec.rho);
    b.torque_rate(spec, prev_u);
    b.soft(spec)?;

    let mut row = RowDVector::zeros(b.layout.n_x);
    row.columns_mut(0, n_u).copy_from(&(&ctx.lgv * &ct.a));
    if let Some(d) = b.layout.delta {
        row[d] = -T::one();
    }
    let rhs = -clf.gamma() * ctx.v - ctx.lfv - (&ctx.lgv * &ct.lf)[0];
    b.ineq.push((row, rhs));

    if spec.friction || spec.rollover {
        let r = contact_rows(model, spec.friction, spec.rollover)?;
        let ru = &r * &ct.forces.gain;
        let r0 = &r * &ct.forces.offset;
        for k in 0..r.nrows() {
            let mut row = RowDVector::zeros(b.layout.n_x);
            row.columns_mut(0, n_u).copy_from(&ru.row(k));
            b.ineq.push((row, -r0[k]));
        }
    }
    if spec.torque_limits {
        b.torque_bounds(model);
    }
    Ok(b.finish(Some(ct)))
}

/// Shared inverse-dynamics skeleton: `σW(𝒳)`, dynamics and holonomic rows,
/// soft terms, torque bounds and contact rows.
fn inverse_dynamics_base<T: Real>(
    model: &dyn RobotModel<T>,
    ctx: &TickContext<T>,
    spec: &ControllerSpec<T>,
    prev_u: Option<&DVector<T>>,
    delta: bool,
) -> Result<Builder<T>> {
    let (n_q, n_u, n_h) = (model.n_q(), model.n_u(), model.n_constraints());
    let mut b = Builder::new(DecisionLayout::inverse_dynamics(n_q, n_u, n_h, delta));
    let l = b.layout.clone();
    let w = &spec.weights;
    b.diagonal(l.qdd.start, n_q, spec.sigma * w.qdd);
    b.diagonal(l.u.start, n_u, spec.sigma * w.u);
    b.diagonal(l.lambda.start, n_h, spec.sigma * w.lambda);
    b.delta_penalty(spec.rho);
    b.torque_rate(spec, prev_u);
    b.soft(spec)?;

    let terms = &ctx.terms;
    // D q̈ − B u − Jᵀ λ = −H
    for i in 0..n_q {
        let mut row = RowDVector::zeros(l.n_x);
        row.columns_mut(l.qdd.start, n_q).copy_from(&terms.mass.row(i));
        row.columns_mut(l.u.start, n_u).copy_from(&(-terms.actuation.row(i)));
        for j in 0..n_h {
            row[l.lambda.start + j] = -terms.jacobian[(j, i)];
        }
        b.eq.push((row, -terms.bias[i]));
    }
    if n_h > 0 {
        let jw = b.widen(&terms.jacobian, l.qdd.start);
        match spec.holonomic {
            Holonomic::Hard => {
                for j in 0..n_h {
                    b.eq.push((jw.row(j).into_owned(), -terms.jdot_qdot[j]));
                }
            }
            Holonomic::Soft(wh) => b.least_squares(&jw, &(-&terms.jdot_qdot), wh),
        }
    }
    if spec.torque_limits {
        b.torque_bounds(model);
    }
    Ok(b)
}

fn contact_inequalities<T: Real>(b: &mut Builder<T>, model: &dyn RobotModel<T>, spec: &ControllerSpec<T>) -> Result<()> {
    if spec.friction || spec.rollover {
        let r = contact_rows(model, spec.friction, spec.rollover)?;
        let rw = b.widen(&r, b.layout.lambda.start);
        for k in 0..rw.nrows() {
            b.ineq.push((rw.row(k).into_owned(), T::zero()));
        }
    }
    Ok(())
}

/// ID-QP: `‖J̇_y q̇ + J_y q̈ − ÿ*‖² + σW(𝒳)` with `ÿ*` the ε-scaled PD
/// feedback from the CLF gains.
pub fn assemble_id_qp<T: Real>(
    model: &dyn RobotModel<T>,
    ctx: &TickContext<T>,
    clf: &ResClf<T>,
    spec: &ControllerSpec<T>,
    prev_u: Option<&DVector<T>>,
) -> Result<Assembled<T>> {
    let mut b = inverse_dynamics_base(model, ctx, spec, prev_u, false)?;
    let target = clf.feedback(&ctx.outputs.eta) - &ctx.outputs.jdot_qdot;
    let jw = b.widen(&ctx.outputs.jacobian, b.layout.qdd.start);
    b.least_squares(&jw, &target, T::one());
    contact_inequalities(&mut b, model, spec)?;
    Ok(b.finish(None))
}

/// ID-CLF-QP family. `plus` adds `L_G V J_y q̈` to the cost; `relaxed`
/// drops the CLF inequality. δ is present when the controller's variant has it.
pub fn assemble_id_clf_qp<T: Real>(
    model: &dyn RobotModel<T>,
    ctx: &TickContext<T>,
    clf: &ResClf<T>,
    spec: &ControllerSpec<T>,
    prev_u: Option<&DVector<T>>,
    plus: bool,
    relaxed: bool,
) -> Result<Assembled<T>> {
    let delta = spec.variant.has_delta() && !relaxed;
    let mut b = inverse_dynamics_base(model, ctx, spec, prev_u, delta)?;
    let l = b.layout.clone();
    let reference = match spec.output_reference {
        OutputReference::Zero => DVector::zeros(ctx.outputs.jdot_qdot.len()),
        OutputReference::Feedback => clf.feedback(&ctx.outputs.eta),
    };
    let jw = b.widen(&ctx.outputs.jacobian, l.qdd.start);
    b.least_squares(&jw, &(reference - &ctx.outputs.jdot_qdot), T::one());
    if plus {
        let g = (&ctx.lgv * &ctx.outputs.jacobian) * spec.vdot_weight;
        for (k, v) in g.iter().enumerate() {
            b.f[l.qdd.start + k] += *v;
        }
    }
    if !relaxed {
        let (mut row, rhs) =
            clf.convergence_constraint_row(&ctx.outputs.eta, &ctx.outputs.jacobian, &ctx.outputs.jdot_qdot, l.n_x);
        if let Some(d) = l.delta {
            row[d] = -T::one();
        }
        b.ineq.push((row, rhs));
    }
    contact_inequalities(&mut b, model, spec)?;
    Ok(b.finish(None))
}

/// Dispatches on the controller's variant. Feedback linearization has no QP.
pub fn assemble<T: Real>(
    model: &dyn RobotModel<T>,
    ctx: &TickContext<T>,
    clf: &ResClf<T>,
    spec: &ControllerSpec<T>,
    prev_u: Option<&DVector<T>>,
) -> Result<Option<Assembled<T>>> {
    let a = match spec.variant {
        Variant::Fbl => return Ok(None),
        Variant::ClfQp | Variant::ClfQpDelta => assemble_clf_qp(model, ctx, clf, spec, prev_u)?,
        Variant::IdQp => assemble_id_qp(model, ctx, clf, spec, prev_u)?,
        Variant::IdClfQp | Variant::IdClfQpDelta => assemble_id_clf_qp(model, ctx, clf, spec, prev_u, false, false)?,
        Variant::IdClfQpPlus | Variant::IdClfQpPlusDelta => {
            assemble_id_clf_qp(model, ctx, clf, spec, prev_u, true, false)?
        }
        Variant::IdClfQpPlusRelaxed => assemble_id_clf_qp(model, ctx, clf, spec, prev_u, true, true)?,
    };
    Ok(Some(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::session::{control_tick, TickStatus};
    use crate::controllers::RegularizationWeights;
    use crate::dynamics::{ContactGeometry, CrouchingLeg, CrouchingLegParams, DoublePendulum, DoublePendulumParams};
    use crate::outputs::{Output, OutputMap, Phase, Spline};
    use crate::qp::{QpSolver, QpStatus};
    use crate::resclf::OutputDynamics;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn patch(mu: f64) -> HolonomicConstraint<f64> {
        HolonomicConstraint {
            label: "patch".into(),
            dim: 3,
            kind: ConstraintKind::Contact,
            contact: Some(ContactGeometry {
                normal: 2,
                tangent_x: Some(0),
                tangent_y: Some(1),
                moment_length: None,
                moment_width: None,
                mu,
                length: 0.2,
                width: 0.1,
            }),
        }
    }

    fn pyramid_ok(rows: &DMatrix<f64>, lambda: &[f64]) -> bool {
        (rows * DVector::from_column_slice(lambda)).max() <= 0.0
    }

    #[test]
    fn pure_normal_force_is_inside_the_pyramid() {
        let r = friction_pyramid_rows(&patch(0.7), true, false).unwrap();
        assert!(pyramid_ok(&r, &[0.0, 0.0, 1.0]));
    }

    #[test]
    fn tangential_force_beyond_the_pyramid_edge_is_rejected() {
        let r = friction_pyramid_rows(&patch(0.7), true, false).unwrap();
        assert!(!pyramid_ok(&r, &[1.0, 0.0, 1.0]));
        assert!(pyramid_ok(&r, &[0.49, 0.0, 1.0]));
        assert!(!pyramid_ok(&r, &[0.0, 0.0, -1.0]));
    }

    #[test]
    fn pyramid_lies_inside_the_friction_cone() {
        let mu = 0.7;
        let r = friction_pyramid_rows(&patch(mu), true, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut inside = 0;
        for _ in 0..1_000_000 {
            let l = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)];
            if pyramid_ok(&r, &l) {
                inside += 1;
                assert!((l[0] * l[0] + l[1] * l[1]).sqrt() <= mu * l[2] * (1.0 + 1e-12), "{l:?}");
            }
        }
        assert!(inside > 10_000);
    }

    #[test]
    fn contact_without_geometry_is_a_configuration_error() {
        let mut c = patch(0.7);
        c.contact = None;
        assert!(matches!(friction_pyramid_rows(&c, true, true), Err(Error::Config(m)) if m.contains("patch")));
    }

    fn pendulum(gravity: f64) -> (DoublePendulum<f64>, OutputSet<f64>, ResClf<f64>) {
        let model = DoublePendulum::new(DoublePendulumParams {
            gravity,
            ..Default::default()
        });
        let outs = (0..2)
            .map(|i| Output::new(format!("q{i}"), OutputMap::Coordinate(i), Spline::constant(0.0)))
            .collect();
        let os = OutputSet::new(&model, vec![], outs, Phase::Time { start: 0.0, end: 1.0 }).unwrap();
        let clf = ResClf::new(OutputDynamics::new(0, 2).unwrap(), DMatrix::identity(4, 4), 0.2).unwrap();
        (model, os, clf)
    }

    fn crouch() -> (CrouchingLeg<f64>, OutputSet<f64>, ResClf<f64>) {
        let model = CrouchingLeg::new(CrouchingLegParams::default());
        let outs = vec![
            Output::new("hip_x", OutputMap::Task("hip_x".into()), Spline::constant(0.0)),
            Output::new("hip_z", OutputMap::Task("hip_z".into()), Spline::constant(0.9)),
            Output::new("torso", OutputMap::Coordinate(2), Spline::constant(0.0)),
        ];
        let os = OutputSet::new(&model, vec![], outs, Phase::Time { start: 0.0, end: 1.0 }).unwrap();
        let clf = ResClf::new(OutputDynamics::new(0, 3).unwrap(), DMatrix::identity(6, 6), 0.2)
            .unwrap()
            .with_gamma(5.0)
            .unwrap();
        (model, os, clf)
    }

    #[test]
    fn zero_error_at_equilibrium_without_gravity_gives_zero_torque() {
        let (model, os, clf) = pendulum(0.0);
        let z = DVector::zeros(2);
        for v in Variant::ALL {
            let tick = control_tick(&ControllerSpec::new(v), &model, &os, &clf, &z, &z, 0.0, None).unwrap();
            assert!(tick.u.amax() < 1e-9, "{v}: {}", tick.u);
            assert!(tick.qdd.amax() < 1e-9, "{v}");
        }
    }

    #[test]
    fn zero_error_clf_qp_reproduces_feedback_linearization() {
        let (model, os, clf) = pendulum(9.81);
        let mut spec = ControllerSpec::new(Variant::ClfQp);
        spec.torque_limits = false;
        let q = DVector::from_vec(vec![0.0, 0.0]);
        let z = DVector::zeros(2);
        let tick = control_tick(&spec, &model, &os, &clf, &q, &z, 0.0, None).unwrap();
        let u_fbl = fbl_control(&model, &os, &clf, &q, &z, 0.0).unwrap();
        assert!((&tick.u - &u_fbl).amax() < 1e-9);
        let ctx = TickContext::new(&model, &os, &clf, &q, &z, 0.0).unwrap();
        assert!(ctx.output_accel(&tick.qdd).amax() < 1e-9);
    }

    #[test]
    fn identical_inputs_give_identical_ticks() {
        let (model, os, clf) = crouch();
        let mut q = model.default_configuration();
        q[3] += 0.02;
        let qd = DVector::from_element(6, 0.1);
        let spec = ControllerSpec::new(Variant::IdClfQpPlus);
        let a = control_tick(&spec, &model, &os, &clf, &q, &qd, 0.3, None).unwrap();
        let b = control_tick(&spec, &model, &os, &clf, &q, &qd, 0.3, None).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.qdd, b.qdd);
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.active_set, b.active_set);
    }

    #[test]
    fn id_qp_at_rest_matches_static_gravity_compensation() {
        let (model, os, clf) = crouch();
        let q = model.default_configuration();
        let z = DVector::zeros(6);
        let mut spec = ControllerSpec::new(Variant::IdQp);
        spec.sigma = 1e-10;
        let tick = control_tick(&spec, &model, &os, &clf, &q, &z, 0.0, None).unwrap();

        // B u + Jᵀ λ = H(q, 0) with q̈ = 0.
        let terms = eval_dynamics(&model as &dyn RobotModel<f64>, &q, &z).unwrap();
        let mut m = DMatrix::zeros(6, 6);
        m.view_mut((0, 0), (6, 3)).copy_from(&terms.actuation);
        m.view_mut((0, 3), (6, 3)).copy_from(&terms.jacobian.transpose());
        let sol = m.lu().solve(&terms.bias).unwrap();
        let u_static = sol.rows(0, 3).into_owned();
        // The solver's 1e-9 Hessian floor acts through the leg's small
        // torque-to-output gain, so agreement is relative to the torque scale.
        assert!((&tick.u - &u_static).amax() < 1e-6 * u_static.amax(), "{} vs {}", tick.u, u_static);
        assert!((tick.lambda[1] - sol[4]).abs() < 1e-6 * sol[4].abs());
        assert!((sol[4] - model.total_mass() * 9.81).abs() < 1e-9);
    }

    #[test]
    fn regularization_barely_moves_the_id_qp_torque() {
        let (model, os, clf) = pendulum(9.81);
        let q = DVector::from_vec(vec![0.1, -0.1]);
        let qd = DVector::from_vec(vec![0.2, 0.1]);
        let mut spec = ControllerSpec::new(Variant::IdQp);
        spec.torque_limits = false;
        spec.weights = RegularizationWeights {
            u: 1.0,
            qdd: 1.0,
            lambda: 1.0,
        };
        spec.sigma = 1e-6;
        let with = control_tick(&spec, &model, &os, &clf, &q, &qd, 0.0, None).unwrap();
        let without = fbl_control(&model, &os, &clf, &q, &qd, 0.0).unwrap();
        assert!((&with.u - &without).amax() < 1e-3, "{} vs {}", with.u, without);
    }

    #[test]
    fn heavier_soft_holonomic_weight_never_loosens_the_constraint() {
        let (model, os, clf) = crouch();
        let mut q = model.default_configuration();
        q[3] += 0.03;
        let qd = DVector::from_element(6, 0.2);
        let ctx = TickContext::new(&model as &dyn RobotModel<f64>, &os, &clf, &q, &qd, 0.1).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..8 {
            let mut spec = ControllerSpec::new(Variant::IdClfQpPlus);
            spec.holonomic = Holonomic::Soft(10f64.powi(k - 2));
            let a = assemble(&model, &ctx, &clf, &spec, None).unwrap().unwrap();
            let s = QpSolver::new().solve(&a.problem, None).unwrap();
            assert_eq!(s.status, QpStatus::Optimal);
            let d = a.decode(&s.x);
            let r = (&ctx.terms.jacobian * &d.qdd + &ctx.terms.jdot_qdot).norm();
            assert!(r <= last * (1.0 + 1e-9) + 1e-12, "weight 1e{}: {r} > {last}", k - 2);
            last = r;
        }
    }

    fn tight_limits() -> (DoublePendulum<f64>, OutputSet<f64>, ResClf<f64>, DVector<f64>) {
        let model = DoublePendulum::new(DoublePendulumParams {
            torque_limit: 0.5,
            ..Default::default()
        });
        let (_, os, clf) = pendulum(9.81);
        (model, os, clf.with_gamma(50.0).unwrap(), DVector::from_vec(vec![0.8, -0.4]))
    }

    #[test]
    fn clf_qp_under_tight_torque_limits_is_infeasible() {
        let (model, os, clf, q) = tight_limits();
        let ctx = TickContext::new(&model as &dyn RobotModel<f64>, &os, &clf, &q, &DVector::zeros(2), 0.0).unwrap();
        let a = assemble_clf_qp(&model, &ctx, &clf, &ControllerSpec::new(Variant::ClfQp), None).unwrap();
        assert_eq!(QpSolver::new().solve(&a.problem, None).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn relaxed_clf_qp_absorbs_the_infeasibility_in_delta() {
        let (model, os, clf, q) = tight_limits();
        let ctx = TickContext::new(&model as &dyn RobotModel<f64>, &os, &clf, &q, &DVector::zeros(2), 0.0).unwrap();
        let a = assemble_clf_qp(&model, &ctx, &clf, &ControllerSpec::new(Variant::ClfQpDelta), None).unwrap();
        let s = QpSolver::new().solve(&a.problem, None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        let d = a.decode(&s.x);
        assert!(d.delta > 0.0);
        assert!(d.u.amax() <= 0.5);
    }

    #[test]
    fn infeasible_tick_falls_back_to_relaxation_and_flags_it() {
        let (model, os, clf, q) = tight_limits();
        let tick = control_tick(&ControllerSpec::new(Variant::ClfQp), &model, &os, &clf, &q, &DVector::zeros(2), 0.0, None)
            .unwrap();
        assert_eq!(tick.status, TickStatus::Relaxed);
        assert_eq!(tick.qp_status, Some(QpStatus::Infeasible));
        assert!(tick.status.is_flagged());
    }

    #[test]
    fn optimal_ticks_honour_dynamics_and_the_convergence_row() {
        let (model, os, clf) = crouch();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q0 = model.default_configuration();
        for _ in 0..20 {
            let q = q0.map(|x| x + rng.random_range(-0.03..0.03));
            let qd = DVector::from_fn(6, |_, _| rng.random_range(-0.2..0.2));
            let ctx = TickContext::new(&model as &dyn RobotModel<f64>, &os, &clf, &q, &qd, 0.0).unwrap();
            for v in [Variant::IdClfQp, Variant::IdClfQpPlus, Variant::IdClfQpPlusDelta, Variant::ClfQpDelta] {
                let spec = ControllerSpec::new(v);
                let a = assemble(&model, &ctx, &clf, &spec, None).unwrap().unwrap();
                let s = QpSolver::new().solve(&a.problem, None).unwrap();
                if s.status != QpStatus::Optimal {
                    continue;
                }
                let d = a.decode(&s.x);
                assert!(ctx.terms.residual(&d.qdd, &d.u, &d.lambda) < 1e-8, "{v}");
                let bound = -clf.gamma() * ctx.v + d.delta;
                assert!(ctx.vdot(&d.qdd) <= bound + 1e-8 * (1.0 + bound.abs()), "{v}");
                let pyramid = contact_rows(&model as &dyn RobotModel<f64>, true, true).unwrap() * &d.lambda;
                assert!(pyramid.max() <= 1e-8, "{v}");
            }
        }
    }

    #[test]
    fn soft_constraint_with_wrong_width_is_rejected() {
        let (model, os, clf) = crouch();
        let q = model.default_configuration();
        let ctx = TickContext::new(&model as &dyn RobotModel<f64>, &os, &clf, &q, &DVector::zeros(6), 0.0).unwrap();
        let mut spec = ControllerSpec::new(Variant::IdQp);
        spec.soft.push(
            crate::controllers::SoftConstraint::new("u0", DMatrix::zeros(1, 4), DVector::zeros(1), 1.0).unwrap(),
        );
        assert!(matches!(assemble(&model, &ctx, &clf, &spec, None), Err(Error::Config(m)) if m.contains("u0")));
    }

    #[test]
    fn soft_constraint_pulls_the_solution_towards_its_target() {
        let (model, os, clf) = crouch();
        let q = model.default_configuration();
        let z = DVector::zeros(6);
        let base = control_tick(&ControllerSpec::new(Variant::IdQp), &model, &os, &clf, &q, &z, 0.0, None).unwrap();
        let mut spec = ControllerSpec::new(Variant::IdQp);
        let mut a = DMatrix::zeros(1, 12);
        a[(0, 6)] = 1.0;
        spec.soft.push(crate::controllers::SoftConstraint::new("hip", a, DVector::from_vec(vec![0.0]), 1e3).unwrap());
        let pulled = control_tick(&spec, &model, &os, &clf, &q, &z, 0.0, None).unwrap();
        assert!(pulled.u[0].abs() < base.u[0].abs());
    }
}

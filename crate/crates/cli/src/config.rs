//! TOML experiment files.
//!
//! A file has five sections: `model`, `outputs`, `clf`, `controller` and
//! `sim`. Unknown keys are rejected and every error names the offending key
//! path, e.g. `controller.weights.qdd`. All quantities are SI (m, rad, s, kg,
//! N, N·m, Hz).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clfqp::controllers::{ControllerSpec, Holonomic, OutputReference, RegularizationWeights, SoftConstraint, Variant};
use clfqp::dynamics::{
    CartPole, CartPoleParams, CrouchingLeg, CrouchingLegParams, DoublePendulum, DoublePendulumParams, RobotModel,
};
use clfqp::outputs::{Output, OutputMap, OutputSet, Phase, Segment, Spline};
use clfqp::resclf::{OutputDynamics, ResClf};
use clfqp::sim::{Perturbation, SimConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub outputs: OutputsSection,
    pub clf: ClfSection,
    pub controller: ControllerSection,
    pub sim: SimSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `double_pendulum`, `cart_pole` or `crouching_leg`.
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Flag(bool),
}

impl ParamValue {
    fn as_f64(self) -> f64 {
        match self {
            ParamValue::Number(x) => x,
            ParamValue::Flag(b) => f64::from(u8::from(b)),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    pub phase: PhaseSection,
    /// Relative-degree-1 outputs.
    #[serde(default)]
    pub velocity: Vec<OutputSection>,
    /// Relative-degree-2 outputs.
    #[serde(default)]
    pub position: Vec<OutputSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseSection {
    /// `τ = (t − start)/(end − start)`, times in s.
    Time { start: f64, end: f64 },
    /// `τ = (p(q) − initial)/rate` driven by the named velocity output.
    State { output: String, initial: f64, rate: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub label: String,
    pub task: Option<String>,
    pub coordinate: Option<usize>,
    pub linear: Option<Vec<f64>>,
    /// Constant desired value; exclusive with `breaks`/`segments`.
    pub constant: Option<f64>,
    pub breaks: Option<Vec<f64>>,
    pub segments: Option<Vec<SegmentSection>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentSection {
    Power(Vec<f64>),
    Bezier(Vec<f64>),
    /// `[from, to]`.
    Cosine([f64; 2]),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClfSection {
    /// Diagonal of `Q`; identity when absent.
    pub q_diag: Option<Vec<f64>>,
    pub epsilon: f64,
    /// Rate used in the convergence row instead of the certified one (1/s).
    pub gamma_override: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    /// One variant name, or a list for `compare`.
    pub variant: OneOrMany<String>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub vdot_weight: Option<f64>,
    pub output_reference: Option<ReferenceName>,
    pub weights: Option<WeightsSection>,
    pub toggles: Option<TogglesSection>,
    pub holonomic: Option<HolonomicSection>,
    pub torque_rate_weight: Option<f64>,
    #[serde(default)]
    pub soft: Vec<SoftSection>,
    /// Variant re-solved on every tick's state for paired rate comparisons.
    pub shadow: Option<VariantName>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub u: f64,
    pub qdd: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TogglesSection {
    pub torque_limits: Option<bool>,
    pub friction: Option<bool>,
    pub rollover: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum HolonomicSection {
    Hard,
    Soft { weight: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftSection {
    pub label: String,
    /// Row-major rows over the variant's decision vector `(q̈, u, λ[, δ])`.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// Integrator step (s).
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// One rate, or a list for a rate sweep under `compare`.
    pub control_rate_hz: OneOrMany<f64>,
    pub duration: f64,
    pub initial_q: Option<Vec<f64>>,
    pub initial_qd: Option<Vec<f64>>,
    pub perturbation: Option<PerturbationSection>,
    /// `[alpha, beta]`.
    pub baumgarte: Option<[f64; 2]>,
    /// Start of the recovery window used for peak-V reporting (s).
    #[serde(default = "default_recovery_after")]
    pub recovery_after: f64,
}

fn default_dt() -> f64 {
    1e-4
}

fn default_recovery_after() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    pub q: Option<Vec<f64>>,
    pub qd: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantName(pub Variant);

impl<'de> Deserialize<'de> for VariantName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Variant::from_name(&s).map(VariantName).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            serde::de::Error::custom(format!("unknown controller variant `{s}`, expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceName(pub OutputReference);

impl<'de> Deserialize<'de> for ReferenceName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match String::deserialize(d)?.as_str() {
            "zero" => Ok(ReferenceName(OutputReference::Zero)),
            "feedback" => Ok(ReferenceName(OutputReference::Feedback)),
            other => Err(serde::de::Error::custom(format!(
                "unknown output reference `{other}`, expected `zero` or `feedback`"
            ))),
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| anyhow!("config: {}", e.message()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            anyhow!("{path}: {}", inner.message())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn build_model(&self) -> Result<Arc<dyn RobotModel<f64>>> {
        let m = &self.model;
        fn apply<P>(params: &mut P, set: impl Fn(&mut P, &str, f64) -> clfqp::Result<()>, over: &BTreeMap<String, ParamValue>) -> Result<()> {
            for (k, v) in over {
                set(params, k, v.as_f64()).map_err(|e| anyhow!("{e}"))?;
            }
            Ok(())
        }
        Ok(match m.name.as_str() {
            "double_pendulum" => {
                let mut p = DoublePendulumParams::default();
                apply(&mut p, |p, k, v| p.set(k, v), &m.params)?;
                Arc::new(DoublePendulum::new(p))
            }
            "cart_pole" => {
                let mut p = CartPoleParams::default();
                apply(&mut p, |p, k, v| p.set(k, v), &m.params)?;
                Arc::new(CartPole::new(p))
            }
            "crouching_leg" => {
                let mut p = CrouchingLegParams::default();
                apply(&mut p, |p, k, v| p.set(k, v), &m.params)?;
                Arc::new(CrouchingLeg::new(p))
            }
            other => bail!("model.name: unknown model `{other}`, expected double_pendulum, cart_pole or crouching_leg"),
        })
    }

    pub fn build_outputs(&self, model: &dyn RobotModel<f64>) -> Result<OutputSet<f64>> {
        let o = &self.outputs;
        let velocity = build_output_list(&o.velocity, "outputs.velocity")?;
        let position = build_output_list(&o.position, "outputs.position")?;
        let phase = match &o.phase {
            PhaseSection::Time { start, end } => Phase::Time { start: *start, end: *end },
            PhaseSection::State { output, initial, rate } => {
                let index = o.velocity.iter().position(|v| &v.label == output).ok_or_else(|| {
                    anyhow!("outputs.phase.output: `{output}` is not a velocity output; a state-based phase needs one")
                })?;
                Phase::State { output: index, initial: *initial, rate: *rate }
            }
        };
        OutputSet::new(model, velocity, position, phase).map_err(|e| anyhow!("outputs: {e}"))
    }

    pub fn build_clf(&self, outputs: &OutputSet<f64>) -> Result<ResClf<f64>> {
        let c = &self.clf;
        let dynamics = OutputDynamics::new(outputs.m1(), outputs.m2()).map_err(|e| anyhow!("outputs: {e}"))?;
        let n = dynamics.dim();
        let q = match &c.q_diag {
            None => DMatrix::identity(n, n),
            Some(d) if d.len() != n => bail!("clf.q_diag: expected {n} entries for the output state, got {}", d.len()),
            Some(d) if d.iter().any(|x| !(*x > 0.0)) => bail!("clf.q_diag: entries must be positive"),
            Some(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        };
        let clf = ResClf::new(dynamics, q, c.epsilon).map_err(|e| anyhow!("clf.epsilon: {e}"))?;
        match c.gamma_override {
            Some(g) => clf.with_gamma(g).map_err(|e| anyhow!("clf.gamma_override: {e}")),
            None => Ok(clf),
        }
    }

    pub fn variants(&self) -> Result<Vec<Variant>> {
        self.controller
            .variant
            .to_vec()
            .iter()
            .map(|name| {
                Variant::from_name(name).ok_or_else(|| {
                    let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                    anyhow!("controller.variant: unknown controller variant `{name}`, expected one of {}", names.join(", "))
                })
            })
            .collect()
    }

    pub fn control_rates(&self) -> Vec<f64> {
        self.sim.control_rate_hz.to_vec()
    }

    pub fn build_controller(&self, variant: Variant) -> Result<ControllerSpec<f64>> {
        let c = &self.controller;
        let mut spec = ControllerSpec::new(variant);
        if let Some(x) = c.sigma {
            spec.sigma = x;
        }
        if let Some(x) = c.rho {
            spec.rho = x;
        }
        if let Some(x) = c.vdot_weight {
            spec.vdot_weight = x;
        }
        if let Some(r) = c.output_reference {
            spec.output_reference = r.0;
        }
        if let Some(w) = &c.weights {
            spec.weights = RegularizationWeights { u: w.u, qdd: w.qdd, lambda: w.lambda };
        }
        let t = c.toggles.clone().unwrap_or_default();
        spec.torque_limits = t.torque_limits.unwrap_or(spec.torque_limits);
        spec.friction = t.friction.unwrap_or(spec.friction);
        spec.rollover = t.rollover.unwrap_or(spec.rollover);
        if let Some(h) = &c.holonomic {
            spec.holonomic = match h {
                HolonomicSection::Hard => Holonomic::Hard,
                HolonomicSection::Soft { weight } => Holonomic::Soft(*weight),
            };
        }
        spec.torque_rate = c.torque_rate_weight;
        for (i, s) in c.soft.iter().enumerate() {
            let cols = s.rows.first().map_or(0, Vec::len);
            if s.rows.iter().any(|r| r.len() != cols) {
                bail!("controller.soft[{i}].rows: rows have different lengths");
            }
            let a = DMatrix::from_fn(s.rows.len(), cols, |r, c| s.rows[r][c]);
            let b = DVector::from_column_slice(&s.rhs);
            spec.soft.push(SoftConstraint::new(s.label.clone(), a, b, s.weight).map_err(|e| anyhow!("{e}"))?);
        }
        spec.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(spec)
    }

    /// One run per (variant, control rate) pair, variants outermost.
    pub fn build_runs(&self) -> Result<Vec<SimConfig<f64>>> {
        let model = self.build_model()?;
        let outputs = Arc::new(self.build_outputs(model.as_ref())?);
        let clf = Arc::new(self.build_clf(&outputs)?);
        let variants = self.variants()?;
        let rates = self.control_rates();
        if variants.is_empty() {
            bail!("controller.variant: at least one variant is required");
        }
        if rates.is_empty() {
            bail!("sim.control_rate_hz: at least one rate is required");
        }
        let shadow = match self.controller.shadow {
            Some(v) => Some(self.build_controller(v.0)?),
            None => None,
        };
        let n = model.n_q();
        let vec_of = |v: &Option<Vec<f64>>, key: &str, default: DVector<f64>| -> Result<DVector<f64>> {
            match v {
                None => Ok(default),
                Some(x) if x.len() == n => Ok(DVector::from_column_slice(x)),
                Some(x) => bail!("sim.{key}: expected {n} entries, got {}", x.len()),
            }
        };
        let initial_q = vec_of(&self.sim.initial_q, "initial_q", model.default_configuration())?;
        let initial_qd = vec_of(&self.sim.initial_qd, "initial_qd", DVector::zeros(n))?;
        let perturbation = match &self.sim.perturbation {
            None => None,
            Some(p) => Some(Perturbation {
                q: vec_of(&p.q, "perturbation.q", DVector::zeros(n))?,
                qd: vec_of(&p.qd, "perturbation.qd", DVector::zeros(n))?,
            }),
        };
        let mut runs = Vec::new();
        for &variant in &variants {
            let spec = self.build_controller(variant)?;
            for &rate in &rates {
                if !(rate > 0.0) || !rate.is_finite() {
                    bail!("sim.control_rate_hz: rates must be positive, got {rate}");
                }
                let label = if rates.len() > 1 { format!("{variant}_{}hz", fmt_rate(rate)) } else { variant.name().to_string() };
                let mut cfg = SimConfig::new(label, model.clone(), outputs.clone(), clf.clone(), spec.clone());
                cfg.dt = self.sim.dt;
                cfg.control_period = 1.0 / rate;
                cfg.duration = self.sim.duration;
                cfg.initial_q = initial_q.clone();
                cfg.initial_qd = initial_qd.clone();
                cfg.perturbation = perturbation.clone();
                cfg.baumgarte = self.sim.baumgarte.map(|[a, b]| (a, b));
                cfg.shadow = shadow.clone();
                cfg.validate().map_err(|e| anyhow!("{e}"))?;
                runs.push(cfg);
            }
        }
        Ok(runs)
    }
}

/// Rate formatted without a trailing `.0`.
pub fn fmt_rate(rate: f64) -> String {
    let r = rate.round();
    if r >= 1.0 && (rate - r).abs() < 1e-9 * r {
        format!("{}", r as u64)
    } else {
        format!("{rate}")
    }
}

fn build_output_list(list: &[OutputSection], key: &str) -> Result<Vec<Output<f64>>> {
    list.iter()
        .enumerate()
        .map(|(i, o)| build_output(o).with_context(|| format!("{key}[{i}] ({})", o.label)))
        .collect()
}

fn build_output(o: &OutputSection) -> Result<Output<f64>> {
    let map = match (&o.task, o.coordinate, &o.linear) {
        (Some(t), None, None) => OutputMap::Task(t.clone()),
        (None, Some(c), None) => OutputMap::Coordinate(c),
        (None, None, Some(l)) => OutputMap::Linear(l.clone()),
        _ => bail!("exactly one of `task`, `coordinate` or `linear` must be given"),
    };
    let desired = match (o.constant, &o.breaks, &o.segments) {
        (Some(c), None, None) => Spline::constant(c),
        (None, breaks, Some(segs)) => {
            let segments: Vec<Segment<f64>> = segs
                .iter()
                .map(|s| match s {
                    SegmentSection::Power(c) => Segment::Power(c.clone()),
                    SegmentSection::Bezier(c) => Segment::Bezier(c.clone()),
                    SegmentSection::Cosine([from, to]) => Segment::Cosine { from: *from, to: *to },
                })
                .collect();
            let breaks = match breaks {
                Some(b) => b.clone(),
                None if segments.len() == 1 => vec![0.0, 1.0],
                None => bail!("`breaks` is required with more than one segment"),
            };
            Spline::new(breaks, segments).map_err(|e| anyhow!("{e}"))?
        }
        _ => bail!("give either `constant` or `segments` (with `breaks` for more than one segment)"),
    };
    Ok(Output::new(o.label.clone(), map, desired))
}

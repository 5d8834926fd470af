use crate::{Error, Real, Result};

/// Highest polynomial degree accepted in a spline segment.
pub const MAX_DEGREE: usize = 7;

/// One polynomial piece, parameterized by its local coordinate `s ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Segment<T: Real> {
    /// Coefficients `c₀ + c₁ s + … + c_k s^k`.
    Power(Vec<T>),
    /// Bernstein control points.
    Bezier(Vec<T>),
    /// Cosine blend `from + (to − from)(1 − cos πs)/2`, zero slope at both ends.
    Cosine { from: T, to: T },
}

impl<T: Real> Segment<T> {
    fn validate(&self) -> Result<()> {
        let len = match self {
            Segment::Power(c) | Segment::Bezier(c) => c.len(),
            Segment::Cosine { .. } => 1,
        };
        if len == 0 || len > MAX_DEGREE + 1 {
            return Err(Error::Config(format!(
                "spline segment needs 1..={} coefficients, got {len}",
                MAX_DEGREE + 1
            )));
        }
        Ok(())
    }

    /// Value and first two derivatives with respect to `s`.
    fn eval(&self, s: T) -> [T; 3] {
        match self {
            Segment::Power(c) => {
                let mut v = [T::zero(); 3];
                for &ck in c.iter().rev() {
                    v[2] = v[2] * s + v[1] * T::lit(2.0);
                    v[1] = v[1] * s + v[0];
                    v[0] = v[0] * s + ck;
                }
                v
            }
            Segment::Bezier(p) => {
                let d1 = differences(p);
                let d2 = differences(&d1);
                [casteljau(p, s), casteljau(&d1, s), casteljau(&d2, s)]
            }
            Segment::Cosine { from, to } => {
                let pi = T::pi();
                let half = (*to - *from) * T::lit(0.5);
                let a = pi * s;
                [
                    *from + half * (T::one() - a.cos()),
                    half * pi * a.sin(),
                    half * pi * pi * a.cos(),
                ]
            }
        }
    }
}

/// Control points of the hodograph.
fn differences<T: Real>(p: &[T]) -> Vec<T> {
    if p.len() < 2 {
        return vec![T::zero()];
    }
    let n = T::lit((p.len() - 1) as f64);
    p.windows(2).map(|w| (w[1] - w[0]) * n).collect()
}

fn casteljau<T: Real>(p: &[T], s: T) -> T {
    let mut b = p.to_vec();
    let one_minus = T::one() - s;
    for k in (1..b.len()).rev() {
        for i in 0..k {
            b[i] = b[i] * one_minus + b[i + 1] * s;
        }
    }
    b[0]
}

/// Piecewise polynomial desired trajectory over `τ ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline<T: Real> {
    breaks: Vec<T>,
    segments: Vec<Segment<T>>,
}

impl<T: Real> Spline<T> {
    /// `breaks` must start at 0, end at 1 and be strictly increasing, with
    /// one more entry than `segments`.
    pub fn new(breaks: Vec<T>, segments: Vec<Segment<T>>) -> Result<Self> {
        if segments.is_empty() || breaks.len() != segments.len() + 1 {
            return Err(Error::Config(format!(
                "spline with {} segments needs {} breakpoints, got {}",
                segments.len(),
                segments.len() + 1,
                breaks.len()
            )));
        }
        if breaks[0] != T::zero() || breaks[breaks.len() - 1] != T::one() {
            return Err(Error::Config("spline breakpoints must span [0, 1]".into()));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("spline breakpoints must be strictly increasing".into()));
        }
        for s in &segments {
            s.validate()?;
        }
        Ok(Spline { breaks, segments })
    }

    pub fn single(segment: Segment<T>) -> Result<Self> {
        Self::new(vec![T::zero(), T::one()], vec![segment])
    }

    pub fn constant(value: T) -> Self {
        Spline {
            breaks: vec![T::zero(), T::one()],
            segments: vec![Segment::Power(vec![value])],
        }
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn breaks(&self) -> &[T] {
        &self.breaks
    }

    /// `y^d(τ)`, `dy^d/dτ`, `d²y^d/dτ²`; `τ` is clamped to `[0, 1]`.
    pub fn eval(&self, tau: T) -> [T; 3] {
        let tau = tau.max(T::zero()).min(T::one());
        let k = self
            .breaks
            .windows(2)
            .position(|w| tau < w[1])
            .unwrap_or(self.segments.len() - 1);
        let (a, b) = (self.breaks[k], self.breaks[k + 1]);
        let h = b - a;
        let s = (tau - a) / h;
        let [v, d1, d2] = self.segments[k].eval(s);
        [v, d1 / h, d2 / (h * h)]
    }

    pub fn value(&self, tau: T) -> T {
        self.eval(tau)[0]
    }
}

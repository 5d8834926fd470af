use super::TelemetryRow;
use crate::qp::QpStatus;
use crate::Real;

/// Per-tick comparison of instantaneous convergence rates between a run's
/// controller and its shadow on identical states.
#[derive(Debug, Clone, PartialEq)]
pub struct RateOrdering {
    pub ticks: usize,
    /// Ticks where both first QP attempts were optimal and `V > 0`.
    pub mutually_optimal: usize,
    /// Ticks with `γ_primary < γ_shadow − tolerance`.
    pub violations: usize,
    /// Smallest `γ_primary − γ_shadow` seen.
    pub worst_margin: f64,
}

impl RateOrdering {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

pub fn rate_ordering<T: Real>(rows: &[TelemetryRow<T>], tolerance: f64) -> RateOrdering {
    let mut out = RateOrdering {
        ticks: rows.len(),
        mutually_optimal: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
    };
    for r in rows {
        let Some(s) = &r.shadow else { continue };
        let both = r.tick.qp_status == Some(QpStatus::Optimal) && s.qp_status == Some(QpStatus::Optimal);
        if !both || !(r.v > T::zero()) {
            continue;
        }
        out.mutually_optimal += 1;
        let margin = (r.tick.gamma_inst - s.gamma_inst).as_f64();
        out.worst_margin = out.worst_margin.min(margin);
        if margin < -tolerance {
            out.violations += 1;
        }
    }
    out
}

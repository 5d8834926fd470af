//! Telemetry CSV: one header row, then one row per control tick.
//!
//! Columns are `t, q0.., qd0.., u0.., lambda0.., V, Vdot_analytic, Vdot_fd,
//! gamma_inst, delta, eta_norm, status, active_set, solve_us`. Floats carry 17
//! significant digits, so parsing a file recovers every value bit for bit.

use std::io::{Read, Write};

use anyhow::{anyhow, bail, Context, Result};
use clfqp::dynamics::RobotModel;
use clfqp::sim::TelemetryRow;

/// Vector widths of a telemetry table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_q: usize,
    pub n_u: usize,
    pub n_lambda: usize,
}

impl Dims {
    pub fn of(model: &dyn RobotModel<f64>) -> Self {
        Dims { n_q: model.n_q(), n_u: model.n_u(), n_lambda: model.n_constraints() }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for (prefix, n) in [("q", self.n_q), ("qd", self.n_q), ("u", self.n_u), ("lambda", self.n_lambda)] {
            h.extend((0..n).map(|i| format!("{prefix}{i}")));
        }
        h.extend(
            ["V", "Vdot_analytic", "Vdot_fd", "gamma_inst", "delta", "eta_norm", "status", "active_set", "solve_us"]
                .map(String::from),
        );
        h
    }

    /// 1-based column of the first entry of `u`, for plot scripts.
    pub fn u_column(&self) -> usize {
        2 + 2 * self.n_q
    }

    pub fn v_column(&self) -> usize {
        2 + 2 * self.n_q + self.n_u + self.n_lambda
    }

    pub fn eta_norm_column(&self) -> usize {
        self.v_column() + 5
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// A parsed telemetry row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub v: f64,
    pub vdot_analytic: f64,
    pub vdot_fd: f64,
    pub gamma_inst: f64,
    pub delta: f64,
    pub eta_norm: f64,
    pub status: String,
    pub active_set: usize,
    pub solve_us: u64,
}

impl CsvRow {
    pub fn from_telemetry(r: &TelemetryRow<f64>) -> Self {
        CsvRow {
            t: r.t,
            q: r.q.iter().copied().collect(),
            qd: r.qd.iter().copied().collect(),
            u: r.u.iter().copied().collect(),
            lambda: r.lambda.iter().copied().collect(),
            v: r.v,
            vdot_analytic: r.vdot_analytic,
            vdot_fd: r.vdot_fd,
            gamma_inst: r.gamma_inst,
            delta: r.delta,
            eta_norm: r.eta_norm,
            status: r.status.as_str().to_string(),
            active_set: r.active_set,
            solve_us: r.solve_us,
        }
    }

    fn record(&self) -> Vec<String> {
        let mut out = vec![format_float(self.t)];
        for v in [&self.q, &self.qd, &self.u, &self.lambda] {
            out.extend(v.iter().map(|x| format_float(*x)));
        }
        out.extend([self.v, self.vdot_analytic, self.vdot_fd, self.gamma_inst, self.delta, self.eta_norm].map(format_float));
        out.extend([self.status.clone(), self.active_set.to_string(), self.solve_us.to_string()]);
        out
    }
}

pub fn write_csv<W: Write>(dims: Dims, rows: &[TelemetryRow<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(dims.header())?;
    for r in rows {
        w.write_record(CsvRow::from_telemetry(r).record())?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a telemetry CSV, inferring the vector widths from the header.
pub fn read_csv<R: Read>(input: R) -> Result<(Dims, Vec<CsvRow>)> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    let count = |prefix: &str| {
        header
            .iter()
            .filter(|h| h.strip_prefix(prefix).is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())))
            .count()
    };
    let dims = Dims { n_q: count("q"), n_u: count("u"), n_lambda: count("lambda") };
    if count("qd") != dims.n_q || header != dims.header() {
        bail!("telemetry header does not follow the expected column layout");
    }
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| anyhow!("row {}: missing column {}", line + 1, header[i]));
        let float = |i: usize| -> Result<f64> {
            field(i)?.parse::<f64>().with_context(|| format!("row {}: column {}", line + 1, header[i]))
        };
        let mut col = 0;
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let v = (col..col + n).map(float).collect::<Result<Vec<_>>>()?;
            col += n;
            Ok(v)
        };
        let t = take(1)?[0];
        let q = take(dims.n_q)?;
        let qd = take(dims.n_q)?;
        let u = take(dims.n_u)?;
        let lambda = take(dims.n_lambda)?;
        let s = take(6)?;
        let base = 1 + 2 * dims.n_q + dims.n_u + dims.n_lambda + 6;
        rows.push(CsvRow {
            t,
            q,
            qd,
            u,
            lambda,
            v: s[0],
            vdot_analytic: s[1],
            vdot_fd: s[2],
            gamma_inst: s[3],
            delta: s[4],
            eta_norm: s[5],
            status: field(base)?.to_string(),
            active_set: field(base + 1)?.parse().with_context(|| format!("row {}: active_set", line + 1))?,
            solve_us: field(base + 2)?.parse().with_context(|| format!("row {}: solve_us", line + 1))?,
        });
    }
    Ok((dims, rows))
}

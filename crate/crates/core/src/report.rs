//! CSV artifacts: per-run traces, the summary table and plot series.
//!
//! Numbers are printed with six significant digits in the style of C's
//! `%g`, so files are compact and byte-stable across runs.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hybrid::Policy;
use crate::metrics::{evaluate, EfficiencyMetrics};
use crate::sim::{Controller, SimulationTrace, TraceRow};

pub const TRACE_HEADER: [&str; 12] = [
    "t", "p_e", "v_e", "a_e", "u_cmd", "p_a", "v_a", "d", "v_mpc", "v_safe", "v_max", "policy",
];

pub const SUMMARY_HEADER: [&str; 11] = [
    "A",
    "T",
    "brake_rate",
    "controller",
    "collision_t",
    "m_p",
    "m_o",
    "m_c",
    "use_mpc",
    "use_safe",
    "use_vmax",
];

/// Formats `x` like `%g`: six significant digits, trailing zeros removed,
/// exponent notation outside `[1e-4, 1e6)`.
pub fn fmt_g(x: f64) -> String {
    const DIGITS: i32 = 6;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // rounding to six digits first decides the exponent, e.g. 999999.5 → 1e+06
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::InvalidTrace(format!("{}: {other:?}", path.display())),
    }
}

fn row_fields(r: &TraceRow) -> [String; 12] {
    [
        fmt_g(r.t),
        fmt_g(r.p_e),
        fmt_g(r.v_e),
        fmt_g(r.a_e),
        fmt_g(r.u_cmd),
        fmt_g(r.p_a),
        fmt_g(r.v_a),
        fmt_g(r.d),
        fmt_g(r.v_mpc),
        fmt_g(r.v_safe),
        fmt_g(r.v_max),
        r.policy.as_str().to_string(),
    ]
}

pub fn write_trace<W: Write>(out: W, trace: &SimulationTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::InvalidTrace(e.to_string());
    w.write_record(TRACE_HEADER).map_err(wrap)?;
    for r in &trace.rows {
        w.write_record(row_fields(r)).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::InvalidTrace(e.to_string()))?;
    Ok(())
}

pub fn save_trace(path: &Path, trace: &SimulationTrace) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = std::io::BufWriter::new(file);
    write_trace(&mut buf, trace).map_err(|e| match e {
        Error::InvalidTrace(msg) => Error::io(path, std::io::Error::other(msg)),
        other => other,
    })?;
    buf.flush().map_err(|e| Error::io(path, e))
}

/// Reads a trace written by [`save_trace`]. Columns are matched by name.
pub fn load_trace(path: &Path) -> Result<SimulationTrace> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut index = [0usize; 12];
    for (slot, name) in index.iter_mut().zip(TRACE_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidTrace(format!("missing column `{name}`")))?;
    }
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let num = |k: usize| -> Result<f64> {
            let field = record.get(index[k]).unwrap_or("");
            field.parse().map_err(|_| {
                Error::InvalidTrace(format!(
                    "row {}: `{}` is not a number in column `{}`",
                    line + 2,
                    field,
                    TRACE_HEADER[k]
                ))
            })
        };
        rows.push(TraceRow {
            t: num(0)?,
            p_e: num(1)?,
            v_e: num(2)?,
            a_e: num(3)?,
            u_cmd: num(4)?,
            p_a: num(5)?,
            v_a: num(6)?,
            d: num(7)?,
            v_mpc: num(8)?,
            v_safe: num(9)?,
            v_max: num(10)?,
            policy: record.get(index[11]).unwrap_or("").parse::<Policy>()?,
        });
    }
    let dt = match rows.as_slice() {
        [a, b, ..] => b.t - a.t,
        _ => 0.0,
    };
    let mut trace = SimulationTrace {
        dt,
        rows,
        collision: None,
        vehicle_length: 0.0,
        max_kkt_residual: 0.0,
        unconverged_cycles: 0,
    };
    trace.collision = crate::sim::detect_collision(&trace);
    Ok(trace)
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub amplitude: f64,
    pub period: f64,
    /// `None` for the nominal scenario.
    pub brake_rate: Option<f64>,
    pub controller: Controller,
    pub collision: Option<f64>,
    /// Absent for runs that collided.
    pub metrics: Option<EfficiencyMetrics>,
}

impl SummaryRow {
    pub fn from_trace(
        amplitude: f64,
        period: f64,
        brake_rate: Option<f64>,
        controller: Controller,
        trace: &SimulationTrace,
    ) -> Result<Self> {
        let metrics = match trace.collision {
            Some(_) => None,
            None => Some(evaluate(trace)?),
        };
        Ok(Self {
            amplitude,
            period,
            brake_rate,
            controller,
            collision: trace.collision,
            metrics,
        })
    }

    fn fields(&self) -> [String; 11] {
        let opt = |x: Option<f64>| x.map(fmt_g).unwrap_or_default();
        let m = self.metrics.as_ref();
        [
            fmt_g(self.amplitude),
            fmt_g(self.period),
            self.brake_rate.map(fmt_g).unwrap_or_else(|| "none".into()),
            self.controller.as_str().into(),
            opt(self.collision),
            opt(m.map(|m| m.m_p)),
            opt(m.map(|m| m.m_o)),
            opt(m.map(|m| m.m_c)),
            opt(m.map(|m| m.usage.mpc)),
            opt(m.map(|m| m.usage.safe_nominal)),
            opt(m.map(|m| m.usage.safe_max)),
        ]
    }
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::InvalidTrace(e.to_string());
    w.write_record(SUMMARY_HEADER).map_err(wrap)?;
    for r in rows {
        w.write_record(r.fields()).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::InvalidTrace(e.to_string()))?;
    Ok(())
}

/// Which series a plot file holds for every controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Ego speed of each controller next to the lead speed.
    Speed,
    /// Gap of each controller.
    Distance,
}

/// Time series of one scenario with a column per controller. Runs that
/// stopped early at a collision leave their later cells empty.
pub fn write_plot<W: Write>(
    out: W,
    kind: PlotKind,
    runs: &[(Controller, &SimulationTrace)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::InvalidTrace(e.to_string());
    let mut header = vec!["t".to_string()];
    if kind == PlotKind::Speed {
        header.push("v_a".into());
    }
    let prefix = match kind {
        PlotKind::Speed => "v_e",
        PlotKind::Distance => "d",
    };
    header.extend(runs.iter().map(|(c, _)| format!("{prefix}_{c}")));
    w.write_record(&header).map_err(wrap)?;

    let Some(longest) = runs.iter().map(|(_, t)| *t).max_by_key(|t| t.rows.len()) else {
        return w.flush().map_err(|e| Error::InvalidTrace(e.to_string()));
    };
    for (k, base) in longest.rows.iter().enumerate() {
        let mut record = vec![fmt_g(base.t)];
        if kind == PlotKind::Speed {
            record.push(fmt_g(base.v_a));
        }
        for (_, trace) in runs {
            record.push(match trace.rows.get(k) {
                Some(r) if kind == PlotKind::Speed => fmt_g(r.v_e),
                Some(r) => fmt_g(r.d),
                None => String::new(),
            });
        }
        w.write_record(&record).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::InvalidTrace(e.to_string()))?;
    Ok(())
}

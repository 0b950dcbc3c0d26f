//! Per-iteration run records shared by the quadratic and line-search solvers,
//! with a CSV form that round-trips every value bit for bit.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const TRACE_SCHEMA: &str = "bbfamily-trace v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    TargetDistance,
    IterationCap,
    /// The step underflowed to zero before the tolerance was met.
    Stalled,
    LineSearchStall,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::GradientTolerance | Termination::TargetDistance)
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::GradientTolerance => "gradient_tolerance",
            Termination::TargetDistance => "target_distance",
            Termination::IterationCap => "iteration_cap",
            Termination::Stalled => "stalled",
            Termination::LineSearchStall => "line_search_stall",
        })
    }
}

impl FromStr for Termination {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "gradient_tolerance" => Termination::GradientTolerance,
            "target_distance" => Termination::TargetDistance,
            "iteration_cap" => Termination::IterationCap,
            "stalled" => Termination::Stalled,
            "line_search_stall" => Termination::LineSearchStall,
            other => return Err(format!("unknown termination `{other}`")),
        })
    }
}

/// State at iterate `x_k` and the step taken from it.
///
/// `alpha_trial` is the steplength after the safeguard, `alpha` the one
/// accepted after `backtracks` reductions. Both are `None` on the final row.
/// `fevals` counts objective evaluations spent in this iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub alpha_trial: Option<f64>,
    pub alpha: Option<f64>,
    pub backtracks: usize,
    pub fevals: usize,
}

impl TraceRow {
    pub fn step(
        k: usize,
        f: f64,
        grad_norm: f64,
        alpha_trial: f64,
        alpha: f64,
        backtracks: usize,
        fevals: usize,
    ) -> Self {
        Self {
            k,
            f,
            grad_norm,
            alpha_trial: Some(alpha_trial),
            alpha: Some(alpha),
            backtracks,
            fevals,
        }
    }

    pub fn terminal(k: usize, f: f64, grad_norm: f64) -> Self {
        Self {
            k,
            f,
            grad_norm,
            alpha_trial: None,
            alpha: None,
            backtracks: 0,
            fevals: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub termination: Termination,
    pub final_x: Vec<f64>,
    /// Rule that produced the first steplength, e.g. `fixed:1`.
    pub alpha0: String,
    /// Stopping rule, e.g. `relative_gradient:0.000001`.
    pub stop_rule: String,
}

/// Summary of how fast `||g_k||` decays over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Least-squares slope of `ln ||g_k||` against `k`.
    pub slope: f64,
    /// Smallest rate with `||g_k|| <= ||g_0|| q^k` on 95% of iterations `k >= 1`.
    pub q: f64,
    /// Fraction of iterations `k >= 1` inside the envelope `||g_0|| q^k`.
    pub coverage: f64,
}

/// 17 significant digits, enough to reproduce any `f64` exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl RunTrace {
    /// Number of steps taken, i.e. the index of the final iterate.
    pub fn iterations(&self) -> usize {
        self.last().k
    }

    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace has at least one row")
    }

    pub fn total_fevals(&self) -> usize {
        self.rows.iter().map(|r| r.fevals).sum()
    }

    /// Geometric fit of the gradient norms; see [`RateFit`].
    pub fn rate_fit(&self) -> Option<RateFit> {
        let g0 = self.rows.first()?.grad_norm;
        if self.rows.len() < 2 || g0.is_nan() || g0 <= 0.0 {
            return None;
        }
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.grad_norm > 0.0)
            .map(|r| (r.k as f64, r.grad_norm.ln()))
            .collect();
        let n = pts.len() as f64;
        let mk = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|(k, l)| (k - mk) * (l - ml)).sum();
        let sxx: f64 = pts.iter().map(|(k, _)| (k - mk) * (k - mk)).sum();
        let slope = sxy / sxx;

        let mut rates: Vec<f64> = self.rows[1..]
            .iter()
            .map(|r| (r.grad_norm / g0).powf(1.0 / r.k as f64))
            .collect();
        rates.sort_by(f64::total_cmp);
        let idx = ((0.95 * rates.len() as f64).ceil() as usize).clamp(1, rates.len()) - 1;
        let q = rates[idx];
        let covered = self.rows[1..]
            .iter()
            // Relative slack absorbs rounding in the k-th root.
            .filter(|r| r.grad_norm <= g0 * q.powi(r.k as i32) * (1.0 + 1e-12))
            .count();
        Some(RateFit {
            slope,
            q,
            coverage: covered as f64 / rates.len() as f64,
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "# {TRACE_SCHEMA} alpha0={} stop={} termination={}",
            self.alpha0, self.stop_rule, self.termination
        )?;
        writeln!(
            out,
            "# final_x={}",
            self.final_x.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";")
        )?;
        writeln!(out, "k,f,grad_norm,alpha_trial,alpha,backtracks,fevals")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.k,
                fmt_f64(r.f),
                fmt_f64(r.grad_norm),
                fmt_opt(r.alpha_trial),
                fmt_opt(r.alpha),
                r.backtracks,
                r.fevals
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses the output of [`RunTrace::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, String> {
        let mut lines = input.lines();
        let mut next = || -> Result<String, String> {
            lines
                .next()
                .ok_or_else(|| "unexpected end of trace".to_string())?
                .map_err(|e| e.to_string())
        };
        let header = next()?;
        let meta = header
            .strip_prefix(&format!("# {TRACE_SCHEMA} "))
            .ok_or_else(|| format!("not a {TRACE_SCHEMA} file"))?;
        let mut alpha0 = None;
        let mut stop_rule = None;
        let mut termination = None;
        for field in meta.split_whitespace() {
            match field.split_once('=') {
                Some(("alpha0", v)) => alpha0 = Some(v.to_string()),
                Some(("stop", v)) => stop_rule = Some(v.to_string()),
                Some(("termination", v)) => termination = Some(v.parse::<Termination>()?),
                _ => return Err(format!("bad header field `{field}`")),
            }
        }
        let xs = next()?;
        let xs = xs.strip_prefix("# final_x=").ok_or("missing final_x line")?;
        let final_x = if xs.is_empty() {
            Vec::new()
        } else {
            xs.split(';')
                .map(|v| v.parse::<f64>().map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()?
        };
        next()?; // column names

        let mut rows = Vec::new();
        let num = |v: &str| v.parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        let opt = |v: &str| if v.is_empty() { Ok(None) } else { num(v).map(Some) };
        let int = |v: &str| v.parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
        for line in lines {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(format!("expected 7 columns, got {}", cols.len()));
            }
            rows.push(TraceRow {
                k: int(cols[0])?,
                f: num(cols[1])?,
                grad_norm: num(cols[2])?,
                alpha_trial: opt(cols[3])?,
                alpha: opt(cols[4])?,
                backtracks: int(cols[5])?,
                fevals: int(cols[6])?,
            });
        }
        if rows.is_empty() {
            return Err("trace has no rows".into());
        }
        Ok(Self {
            rows,
            termination: termination.ok_or("missing termination")?,
            final_x,
            alpha0: alpha0.ok_or("missing alpha0")?,
            stop_rule: stop_rule.ok_or("missing stop rule")?,
        })
    }
}

//! Dolan-More performance profiles.
//!
//! For problem `p` and solver `s` the ratio is `r = cost(p, s) / min_s cost(p, s)`,
//! with `r = inf` when `s` failed; `rho_s(theta)` is the fraction of problems
//! with `r <= theta`.

use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::trace::fmt_f64;

pub const PROFILE_SCHEMA: &str = "bbfamily-profile v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("need at least two solvers, got {0}")]
    TooFewSolvers(usize),
    #[error("cost matrix has no problems")]
    NoProblems,
    #[error("problem {0} has no successful solver")]
    AllFailedOnProblem(String),
    #[error("problem {problem} has {got} costs, expected {expected}")]
    Ragged {
        problem: String,
        expected: usize,
        got: usize,
    },
    #[error("cost {cost} for problem {problem} must be positive and finite")]
    BadCost { problem: String, cost: f64 },
    #[error("malformed cost table: {0}")]
    Parse(String),
}

/// Per-problem costs for each solver; `None` marks a failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostMatrix {
    pub solvers: Vec<String>,
    pub problems: Vec<String>,
    pub costs: Vec<Vec<Option<f64>>>,
}

fn parse_cell(cell: &str) -> Result<Option<f64>, ProfileError> {
    let cell = cell.trim();
    match cell.to_ascii_lowercase().as_str() {
        "" | "fail" | "failed" | "--" | "inf" | "nan" => Ok(None),
        _ => cell
            .parse::<f64>()
            .map(Some)
            .map_err(|_| ProfileError::Parse(format!("`{cell}` is not a cost"))),
    }
}

impl CostMatrix {
    /// Reads a wide table: header `problem,<solver>,...`, one row per problem.
    /// Empty cells and `fail`, `--`, `inf` mark failures; `#` lines are comments.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, ProfileError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(input);
        let header = rdr.headers().map_err(|e| ProfileError::Parse(e.to_string()))?;
        if header.len() < 2 {
            return Err(ProfileError::Parse("header needs a problem column and solvers".into()));
        }
        let solvers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut problems = Vec::new();
        let mut costs = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ProfileError::Parse(e.to_string()))?;
            let name = rec.get(0).unwrap_or_default().to_string();
            let row = rec.iter().skip(1).map(parse_cell).collect::<Result<Vec<_>, _>>()?;
            problems.push(name);
            costs.push(row);
        }
        Ok(Self {
            solvers,
            problems,
            costs,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["problem".to_string()];
        header.extend(self.solvers.iter().cloned());
        w.write_record(&header)?;
        for (p, row) in self.problems.iter().zip(&self.costs) {
            let mut rec = vec![p.clone()];
            rec.extend(row.iter().map(|c| c.map(fmt_f64).unwrap_or_else(|| "fail".into())));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sorted performance ratios per solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileTable {
    pub solvers: Vec<String>,
    pub problems: usize,
    /// `ratios[s]` ascending, failures as `+inf`.
    #[serde(skip)]
    pub ratios: Vec<Vec<f64>>,
}

impl ProfileTable {
    /// `rho_s(theta)`: fraction of problems solved within `theta` of the best.
    pub fn rho(&self, solver: usize, theta: f64) -> f64 {
        let r = &self.ratios[solver];
        let within = r.partition_point(|&x| x <= theta);
        within as f64 / self.problems as f64
    }

    /// Limit of `rho_s` as `theta -> inf`.
    pub fn solve_fraction(&self, solver: usize) -> f64 {
        let solved = self.ratios[solver].iter().filter(|r| r.is_finite()).count();
        solved as f64 / self.problems as f64
    }

    /// Every finite ratio attained by some solver, ascending, starting at 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .ratios
            .iter()
            .flatten()
            .copied()
            .filter(|r| r.is_finite())
            .collect();
        pts.push(1.0);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Long format `solver,theta,rho` at every breakpoint.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# {PROFILE_SCHEMA} problems={}", self.problems)?;
        writeln!(out, "solver,theta,rho")?;
        let pts = self.breakpoints();
        for (s, name) in self.solvers.iter().enumerate() {
            for &t in &pts {
                writeln!(out, "{name},{},{}", fmt_f64(t), fmt_f64(self.rho(s, t)))?;
            }
        }
        Ok(())
    }

    /// Rows of `(solver, theta, rho)` suitable for JSON output.
    pub fn points(&self) -> Vec<(String, f64, f64)> {
        let pts = self.breakpoints();
        self.solvers
            .iter()
            .enumerate()
            .flat_map(|(s, name)| pts.iter().map(move |&t| (name.clone(), t, self.rho(s, t))))
            .collect()
    }
}

pub fn performance_profile(matrix: &CostMatrix) -> Result<ProfileTable, ProfileError> {
    let ns = matrix.solvers.len();
    if ns < 2 {
        return Err(ProfileError::TooFewSolvers(ns));
    }
    if matrix.costs.is_empty() {
        return Err(ProfileError::NoProblems);
    }
    let mut ratios = vec![Vec::with_capacity(matrix.costs.len()); ns];
    for (i, row) in matrix.costs.iter().enumerate() {
        let name = matrix
            .problems
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("#{i}"));
        if row.len() != ns {
            return Err(ProfileError::Ragged {
                problem: name,
                expected: ns,
                got: row.len(),
            });
        }
        if let Some(&cost) = row.iter().flatten().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(ProfileError::BadCost { problem: name, cost });
        }
        let best = row
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(ProfileError::AllFailedOnProblem(name));
        }
        for (s, c) in row.iter().enumerate() {
            ratios[s].push(c.map_or(f64::INFINITY, |c| c / best));
        }
    }
    for r in &mut ratios {
        r.sort_by(f64::total_cmp);
    }
    Ok(ProfileTable {
        solvers: matrix.solvers.clone(),
        problems: matrix.costs.len(),
        ratios,
    })
}

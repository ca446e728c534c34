//! Run configuration: flat `key=value` text files plus command-line
//! overrides, applied in a fixed precedence order (built-in defaults, then
//! the config file, then flags, then trailing `key=value` arguments).

use serde::Serialize;
use srmg::mg::{CycleParams, SolutionRestriction, SolverOptions};
use srmg::smooth::ChebRange;
use srmg::sr::Schedule;
use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Conventional,
    Sr,
    VcycleIterative,
}

impl Solver {
    pub fn parse(s: &str) -> Result<Solver, ConfigError> {
        match s {
            "conventional" => Ok(Solver::Conventional),
            "sr" => Ok(Solver::Sr),
            "vcycle-iterative" => Ok(Solver::VcycleIterative),
            _ => Err(ConfigError(format!(
                "unknown solver '{s}' (expected conventional, sr, or vcycle-iterative)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Solver::Conventional => "conventional",
            Solver::Sr => "sr",
            Solver::VcycleIterative => "vcycle-iterative",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedKind {
    Linear,
    Mbs,
    Full,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub solver: Solver,
    pub ranks: [i64; 3],
    pub pn0v: i64,
    pub k: u32,
    pub schedule: SchedKind,
    pub a: i64,
    pub b: i64,
    pub j1: i64,
    pub alpha: u32,
    pub nu1: u32,
    pub nu2: u32,
    pub n_vcycles: u32,
    pub cheb_lo: f64,
    pub cheb_hi: f64,
    pub coarse_tol: f64,
    pub coarse_max_iter: usize,
    /// Sweep axes; empty means the command's own default.
    pub a_values: Vec<i64>,
    pub b_values: Vec<i64>,
    pub pn0v_values: Vec<i64>,
    pub k_values: Vec<u32>,
    /// `pn0v:k` columns for the schedule sweep.
    pub columns: Vec<(i64, u32)>,
    pub out: PathBuf,
    pub large: bool,
    pub check: bool,
    pub verbosity: u32,
    #[serde(skip)]
    seen: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            solver: Solver::Conventional,
            ranks: [4, 2, 2],
            pn0v: 4,
            k: 4,
            schedule: SchedKind::Linear,
            a: 4,
            b: 1,
            j1: 4,
            alpha: 1,
            nu1: 2,
            nu2: 2,
            n_vcycles: 1,
            cheb_lo: 0.25,
            cheb_hi: 1.0,
            coarse_tol: 1e-10,
            coarse_max_iter: 200,
            a_values: Vec::new(),
            b_values: Vec::new(),
            pn0v_values: Vec::new(),
            k_values: Vec::new(),
            columns: Vec::new(),
            out: PathBuf::from("out"),
            large: false,
            check: false,
            verbosity: 0,
            seen: BTreeSet::new(),
        }
    }
}

fn p_i64(key: &str, v: &str) -> Result<i64, ConfigError> {
    v.parse().map_err(|_| ConfigError(format!("{key}: expected an integer, got '{v}'")))
}

fn p_u32(key: &str, v: &str) -> Result<u32, ConfigError> {
    v.parse().map_err(|_| ConfigError(format!("{key}: expected a non-negative integer, got '{v}'")))
}

fn p_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse().map_err(|_| ConfigError(format!("{key}: expected a number, got '{v}'")))
}

fn p_list<T, F: Fn(&str, &str) -> Result<T, ConfigError>>(
    key: &str,
    v: &str,
    f: F,
) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|s| f(key, s.trim())).collect()
}

pub fn parse_ranks(v: &str) -> Result<[i64; 3], ConfigError> {
    let parts: Vec<&str> = v.split('x').collect();
    if parts.len() != 3 {
        return Err(ConfigError(format!("ranks: expected P1xP2xP3, got '{v}'")));
    }
    let mut p = [0i64; 3];
    for (d, s) in parts.iter().enumerate() {
        p[d] = p_i64("ranks", s)?;
    }
    Ok(p)
}

impl RunConfig {
    /// Whether the user set this key anywhere (file, flag, or override) —
    /// commands substitute their own defaults only for untouched keys.
    pub fn is_set(&self, key: &str) -> bool {
        self.seen.contains(key)
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "solver" => self.solver = Solver::parse(value)?,
            "ranks" => self.ranks = parse_ranks(value)?,
            "pn0v" => self.pn0v = p_i64(key, value)?,
            "k" => self.k = p_u32(key, value)?,
            "schedule" => {
                self.schedule = match value {
                    "linear" => SchedKind::Linear,
                    "mbs" => SchedKind::Mbs,
                    "full" => SchedKind::Full,
                    _ => {
                        return Err(ConfigError(format!(
                            "unknown schedule '{value}' (expected linear, mbs, or full)"
                        )))
                    }
                }
            }
            "a" => self.a = p_i64(key, value)?,
            "b" => self.b = p_i64(key, value)?,
            "j1" => self.j1 = p_i64(key, value)?,
            "alpha" => self.alpha = p_u32(key, value)?,
            "nu1" => self.nu1 = p_u32(key, value)?,
            "nu2" => self.nu2 = p_u32(key, value)?,
            "n_vcycles" => self.n_vcycles = p_u32(key, value)?,
            "cheb_lo" => self.cheb_lo = p_f64(key, value)?,
            "cheb_hi" => self.cheb_hi = p_f64(key, value)?,
            "coarse_tol" => self.coarse_tol = p_f64(key, value)?,
            "coarse_max_iter" => {
                self.coarse_max_iter = p_u32(key, value)? as usize;
            }
            "a_values" => self.a_values = p_list(key, value, p_i64)?,
            "b_values" => self.b_values = p_list(key, value, p_i64)?,
            "pn0v_values" => self.pn0v_values = p_list(key, value, p_i64)?,
            "k_values" => self.k_values = p_list(key, value, p_u32)?,
            "columns" => {
                self.columns = value
                    .split(',')
                    .map(|c| {
                        let (l, r) = c
                            .trim()
                            .split_once(':')
                            .ok_or_else(|| {
                                ConfigError(format!("columns: expected PN0V:K, got '{c}'"))
                            })?;
                        Ok((p_i64("columns", l)?, p_u32("columns", r)?))
                    })
                    .collect::<Result<_, ConfigError>>()?
            }
            "out" => self.out = PathBuf::from(value),
            "check" => {
                self.check = value
                    .parse()
                    .map_err(|_| ConfigError(format!("check: expected true or false, got '{value}'")))?
            }
            "verbosity" => self.verbosity = p_u32(key, value)?,
            _ => return Err(ConfigError(format!("unknown configuration key '{key}'"))),
        }
        self.seen.insert(key.to_string());
        Ok(())
    }

    pub fn apply_pair(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("override '{kv}' is not of the form key=value")))?;
        self.apply(k.trim(), v.trim())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.apply_pair(line)
                .map_err(|e| ConfigError(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (d, &p) in self.ranks.iter().enumerate() {
            if p < 1 || !(p as u64).is_power_of_two() {
                return Err(ConfigError(format!(
                    "ranks: dimension {d} is {p}; each must be a power of 2 so levels divide evenly"
                )));
            }
        }
        let check_pn0v = |v: i64| -> Result<(), ConfigError> {
            if v < 2 || !(v as u64).is_power_of_two() {
                return Err(ConfigError(format!(
                    "pn0v={v} is invalid: the per-rank transition extent must be a power of 2 \
                     and at least 2, or the grid ladder cannot divide evenly down to 2x1x1"
                )));
            }
            Ok(())
        };
        check_pn0v(self.pn0v)?;
        for &v in &self.pn0v_values {
            check_pn0v(v)?;
        }
        for &(v, k) in &self.columns {
            check_pn0v(v)?;
            if k < 1 {
                return Err(ConfigError("columns: k must be at least 1".into()));
            }
        }
        if self.k < 1 {
            return Err(ConfigError("k must be at least 1".into()));
        }
        for &k in &self.k_values {
            if k < 1 {
                return Err(ConfigError("k_values: each k must be at least 1".into()));
            }
        }
        if self.a < 0 || self.b < 0 {
            return Err(ConfigError("schedule parameters a and b must be non-negative".into()));
        }
        if self.j1 < 2 || self.j1 % 2 != 0 {
            return Err(ConfigError(format!("j1={} must be an even integer >= 2", self.j1)));
        }
        if self.n_vcycles < 1 {
            return Err(ConfigError("n_vcycles must be at least 1".into()));
        }
        if !(self.cheb_lo > 0.0 && self.cheb_lo < self.cheb_hi) {
            return Err(ConfigError(format!(
                "smoother interval [{}, {}] must satisfy 0 < cheb_lo < cheb_hi",
                self.cheb_lo, self.cheb_hi
            )));
        }
        if !(self.coarse_tol > 0.0) || self.coarse_max_iter < 1 {
            return Err(ConfigError("coarse solver needs coarse_tol > 0 and coarse_max_iter >= 1".into()));
        }
        Ok(())
    }

    pub fn schedule_obj(&self) -> Schedule {
        match self.schedule {
            SchedKind::Linear => Schedule::Linear { a: self.a, b: self.b },
            SchedKind::Mbs => Schedule::Mbs { j1: self.j1 },
            SchedKind::Full => Schedule::Full,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            cheb: ChebRange { lo_frac: self.cheb_lo, hi_frac: self.cheb_hi },
            coarse_tol: self.coarse_tol,
            coarse_max_iter: self.coarse_max_iter,
            solution_restriction: SolutionRestriction::Average,
        }
    }

    pub fn cycle(&self) -> CycleParams {
        CycleParams {
            alpha: self.alpha,
            nu1: self.nu1,
            nu2: self.nu2,
            n_vcycles: self.n_vcycles,
        }
    }

    /// One-line provenance echo placed at the top of every CSV.
    pub fn echo(&self) -> String {
        format!(
            "# solver={} ranks={}x{}x{} pn0v={} k={} schedule={} alpha={} nu1={} nu2={} n_vcycles={}\n",
            self.solver.name(),
            self.ranks[0],
            self.ranks[1],
            self.ranks[2],
            self.pn0v,
            self.k,
            self.schedule_obj().label(),
            self.alpha,
            self.nu1,
            self.nu2,
            self.n_vcycles
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_parsing() {
        let mut c = RunConfig::default();
        c.apply_pair("ranks=2x2x1").unwrap();
        c.apply_pair("pn0v=8").unwrap();
        c.apply_pair("a_values=2, 4,6").unwrap();
        c.apply_pair("columns=4:4,8:5").unwrap();
        assert_eq!(c.ranks, [2, 2, 1]);
        assert_eq!(c.a_values, vec![2, 4, 6]);
        assert_eq!(c.columns, vec![(4, 4), (8, 5)]);
        assert!(c.is_set("pn0v") && !c.is_set("k"));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn bad_values_are_rejected() {
        let mut c = RunConfig::default();
        assert!(c.apply_pair("pn0v=three").is_err());
        assert!(c.apply_pair("nonsense=1").is_err());
        assert!(c.apply_pair("pn0v").is_err());
        c.apply_pair("pn0v=3").unwrap();
        let e = c.validate().unwrap_err();
        assert!(e.0.contains("power of 2"), "{e}");
    }
}

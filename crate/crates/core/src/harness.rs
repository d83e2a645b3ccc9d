//! Seeded batch experiments, CSV output and point diagnostics.

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::merit::merit;
use crate::problem::{
    check_mpcc_licq, check_mpcc_ssoc, check_relaxed_lq_cq, classify_stationarity, load_lq_problem, Builtin, LqProblem,
    MpccProblem, PrimalDual, Stationarity, TOL_RANK,
};
use crate::residual::assemble_f;
use crate::solver::{solve_global, SolveOptions, Status};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Tolerance used to label converged runs.
pub const CLASS_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProblemSource {
    Builtin(Builtin),
    File(PathBuf),
}

impl ProblemSource {
    pub fn load(&self) -> Result<LqProblem> {
        match self {
            ProblemSource::Builtin(b) => b.build(),
            ProblemSource::File(p) => load_lq_problem(p),
        }
    }

    pub fn reference_x(&self) -> Option<Vec<f64>> {
        match self {
            ProblemSource::Builtin(b) => Some(b.reference_x()),
            ProblemSource::File(_) => None,
        }
    }
}

impl fmt::Display for ProblemSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSource::Builtin(Builtin::Toy { c }) => write!(f, "toy(c={c})"),
            ProblemSource::Builtin(Builtin::Perturbed { eps }) => write!(f, "perturbed(eps={eps})"),
            ProblemSource::Builtin(Builtin::Obstacle { n }) => write!(f, "obstacle(N={n})"),
            ProblemSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub runs: usize,
    pub master_seed: u64,
    pub options: SolveOptions,
    pub output: Option<PathBuf>,
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSource, runs: usize, master_seed: u64) -> Self {
        ExperimentConfig {
            problem,
            runs,
            master_seed,
            options: SolveOptions::default(),
            output: None,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// Solver status, or `error` when the run could not be evaluated.
    pub status: String,
    pub iterations: usize,
    pub residual: f64,
    pub merit_grad: f64,
    /// `‖x − x_ref‖₂` when a reference solution is known.
    pub error: Option<f64>,
    pub class: String,
    pub wall_ms: f64,
    #[serde(skip)]
    pub final_z: Option<PrimalDual>,
}

impl RunRecord {
    pub fn converged(&self) -> bool {
        self.status == Status::ConvergedResidual.to_string()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub converged: usize,
    pub stationary_merit: usize,
    pub max_iter: usize,
    pub failed: usize,
    pub mean_iterations: f64,
    pub median_iterations: f64,
    pub mean_error: Option<f64>,
    pub mean_ms: f64,
    pub total_ms: f64,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "runs               {}", self.runs)?;
        writeln!(f, "converged          {}", self.converged)?;
        writeln!(f, "stationary merit   {}", self.stationary_merit)?;
        writeln!(f, "max iterations     {}", self.max_iter)?;
        writeln!(f, "failed             {}", self.failed)?;
        writeln!(f, "mean iterations    {:.2}", self.mean_iterations)?;
        writeln!(f, "median iterations  {:.1}", self.median_iterations)?;
        if let Some(e) = self.mean_error {
            writeln!(f, "mean error         {e:.3e}")?;
        }
        write!(f, "mean time          {:.3} ms", self.mean_ms)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of run `run` within a batch; independent of scheduling.
pub fn derive_seed(master_seed: u64, run: usize) -> u64 {
    splitmix64(splitmix64(master_seed) ^ (run as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Uniform start on `[−n, n]` in every coordinate of `z`.
pub fn random_start(problem: &dyn MpccProblem, seed: u64) -> PrimalDual {
    let d = problem.dims();
    let r = d.n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..d.total()).map(|_| rng.gen_range(-r..=r)).collect();
    PrimalDual::unstack(d, &v)
}

fn label(problem: &dyn MpccProblem, z: &PrimalDual) -> String {
    match classify_stationarity(problem, z, CLASS_TOL) {
        Ok(s) => s.to_string(),
        Err(Error::Infeasible { .. }) => "infeasible".into(),
        Err(e) => format!("error: {e}"),
    }
}

pub fn run_one(
    problem: &dyn MpccProblem,
    reference: Option<&[f64]>,
    run: usize,
    seed: u64,
    opts: &SolveOptions,
) -> RunRecord {
    let z0 = random_start(problem, seed);
    match solve_global(problem, &z0, opts) {
        Ok(rep) => RunRecord {
            run,
            seed,
            status: rep.status.to_string(),
            iterations: rep.iterations,
            residual: rep.final_residual_norm,
            merit_grad: rep.final_merit_grad_norm,
            error: reference.map(|r| {
                let diff: Vec<f64> = rep.final_z.x.iter().zip(r).map(|(a, b)| a - b).collect();
                norm2(&diff)
            }),
            class: label(problem, &rep.final_z),
            wall_ms: rep.wall_time.as_secs_f64() * 1e3,
            final_z: Some(rep.final_z),
        },
        Err(e) => RunRecord {
            run,
            seed,
            status: "error".into(),
            iterations: 0,
            residual: f64::NAN,
            merit_grad: f64::NAN,
            error: None,
            class: format!("error: {e}"),
            wall_ms: 0.0,
            final_z: None,
        },
    }
}

/// Runs `runs` seeded solves; per-run failures are recorded, never fatal.
pub fn run_batch(
    problem: &dyn MpccProblem,
    reference: Option<&[f64]>,
    runs: usize,
    master_seed: u64,
    opts: &SolveOptions,
    execution: Execution,
) -> Vec<RunRecord> {
    let one = |run: usize| run_one(problem, reference, run, derive_seed(master_seed, run), opts);
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..runs).into_par_iter().map(one).collect()
        }
        _ => (0..runs).map(one).collect(),
    }
}

pub fn summarize(records: &[RunRecord]) -> Summary {
    let n = records.len();
    if n == 0 {
        return Summary::default();
    }
    let count = |s: Status| records.iter().filter(|r| r.status == s.to_string()).count();
    let mut iters: Vec<usize> = records.iter().map(|r| r.iterations).collect();
    iters.sort_unstable();
    let median = if n % 2 == 1 {
        iters[n / 2] as f64
    } else {
        0.5 * (iters[n / 2 - 1] + iters[n / 2]) as f64
    };
    let errors: Vec<f64> = records.iter().filter_map(|r| r.error).collect();
    let total_ms: f64 = records.iter().map(|r| r.wall_ms).sum();
    Summary {
        runs: n,
        converged: count(Status::ConvergedResidual),
        stationary_merit: count(Status::StationaryMerit),
        max_iter: count(Status::MaxIter),
        failed: records
            .iter()
            .filter(|r| r.status == "error" || r.status == Status::LineSearchFailure.to_string())
            .count(),
        mean_iterations: iters.iter().sum::<usize>() as f64 / n as f64,
        median_iterations: median,
        mean_error: (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64),
        mean_ms: total_ms / n as f64,
        total_ms,
    }
}

pub const CSV_HEADER: [&str; 9] = ["run", "seed", "status", "iters", "resid", "merit_grad", "err", "class", "ms"];

pub fn write_csv(records: &[RunRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.run.to_string(),
            r.seed.to_string(),
            r.status.clone(),
            r.iterations.to_string(),
            format!("{:.6e}", r.residual),
            format!("{:.6e}", r.merit_grad),
            r.error.map_or(String::new(), |e| format!("{e:.6e}")),
            r.class.clone(),
            format!("{:.3}", r.wall_ms),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn write_csv_file(records: &[RunRecord], path: &Path) -> Result<()> {
    write_csv(records, std::fs::File::create(path)?)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<(Vec<RunRecord>, Summary)> {
    if config.runs == 0 {
        return Err(Error::InvalidParameter("runs must be at least 1".into()));
    }
    config.options.validate()?;
    let problem = config.problem.load()?;
    let reference = config.problem.reference_x();
    let records = run_batch(
        &problem,
        reference.as_deref(),
        config.runs,
        config.master_seed,
        &config.options,
        config.execution,
    );
    if let Some(path) = &config.output {
        write_csv_file(&records, path)?;
    }
    let summary = summarize(&records);
    Ok((records, summary))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnosis {
    /// `None` when the point is infeasible.
    pub stationarity: Option<Stationarity>,
    pub violation: Option<f64>,
    pub licq: bool,
    pub relaxed_cq: bool,
    /// `Err` carries the reason the check could not run.
    pub ssoc: std::result::Result<bool, String>,
    pub residual_norm: f64,
    pub merit: f64,
    pub merit_grad_norm: f64,
}

pub fn diagnose(problem: &dyn MpccProblem, z: &PrimalDual) -> Result<Diagnosis> {
    z.check(problem.dims())?;
    let (stationarity, violation) = match classify_stationarity(problem, z, CLASS_TOL) {
        Ok(s) => (Some(s), None),
        Err(Error::Infeasible { violation }) => (None, Some(violation)),
        Err(e) => return Err(e),
    };
    let ssoc = match stationarity {
        Some(Stationarity::M | Stationarity::S) => check_mpcc_ssoc(problem, z, 1e-12).map_err(|e| e.to_string()),
        _ => Err("not M-stationary".into()),
    };
    let m = merit(problem, z)?;
    Ok(Diagnosis {
        stationarity,
        violation,
        licq: check_mpcc_licq(problem, &z.x, TOL_RANK)?,
        relaxed_cq: check_relaxed_lq_cq(problem, z, TOL_RANK)?,
        ssoc,
        residual_norm: assemble_f(problem, z)?.norm(),
        merit: m.value,
        merit_grad_norm: norm2(&m.grad),
    })
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.stationarity, self.violation) {
            (Some(s), _) => writeln!(f, "stationarity   {s}")?,
            (None, Some(v)) => writeln!(f, "stationarity   infeasible (violation {v:.3e})")?,
            (None, None) => writeln!(f, "stationarity   unknown")?,
        }
        writeln!(f, "MPCC-LICQ      {}", self.licq)?;
        writeln!(f, "relaxed CQ     {}", self.relaxed_cq)?;
        match &self.ssoc {
            Ok(b) => writeln!(f, "MPCC-SSOC      {b}")?,
            Err(e) => writeln!(f, "MPCC-SSOC      not checked ({e})")?,
        }
        writeln!(f, "|F|            {:.3e}", self.residual_norm)?;
        writeln!(f, "Phi_FB         {:.3e}", self.merit)?;
        write!(f, "|grad Phi_FB|  {:.3e}", self.merit_grad_norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{perturbed, toy, toy_root};

    #[test]
    fn random_start_is_deterministic_and_in_range() {
        let p = toy(0.1).unwrap();
        let a = random_start(&p, 42);
        assert_eq!(a, random_start(&p, 42));
        assert_ne!(a, random_start(&p, 43));
        assert!(a.stack().iter().all(|v| v.abs() <= 3.0));
    }

    #[test]
    fn random_start_mean_is_centred() {
        let p = toy(0.1).unwrap();
        let n = 3.0;
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in 0..(100_000 / 7 + 1) {
            for v in random_start(&p, derive_seed(5, s)).stack() {
                sum += v;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!(mean.abs() <= 0.05 * n, "{mean}");
    }

    #[test]
    fn seeds_are_distinct() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|r| derive_seed(7, r)).collect();
        assert_eq!(s.len(), 1000);
    }

    #[test]
    fn toy_diagnosis() {
        let p = toy(0.1).unwrap();
        let d = diagnose(&p, &toy_root()).unwrap();
        assert_eq!(d.stationarity, Some(Stationarity::M));
        assert!(!d.licq);
        assert!(d.relaxed_cq);
        assert_eq!(d.ssoc, Ok(true));
    }

    #[test]
    fn infeasible_diagnosis() {
        let p = perturbed(0.2).unwrap();
        let z = PrimalDual {
            x: vec![-1.0, -1.0],
            lambda: vec![],
            eta: vec![],
            mu: vec![0.3],
            nu: vec![0.1],
        };
        let d = diagnose(&p, &z).unwrap();
        assert_eq!(d.stationarity, None);
        assert!(d.violation.unwrap() > 0.5);
        assert!(d.to_string().contains("infeasible"));
    }

    #[test]
    fn csv_layout() {
        let p = toy(0.1).unwrap();
        let recs = run_batch(&p, Some(&[0.0; 3]), 3, 1, &SolveOptions::default(), Execution::Sequential);
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(rd.headers().unwrap(), CSV_HEADER.as_slice());
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.len() == 9 && &r[2] == "converged_residual"));
    }

    #[test]
    fn zero_runs_rejected() {
        let c = ExperimentConfig::new(ProblemSource::Builtin(Builtin::Toy { c: 0.1 }), 0, 1);
        assert!(run_experiment(&c).is_err());
    }
}

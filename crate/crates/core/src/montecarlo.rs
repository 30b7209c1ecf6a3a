//! Monte Carlo tasks with closed-form answers, used to show how generator
//! defects turn into wrong results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorDescriptor};
use crate::stream::BitStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrand {
    /// x^2, integral 1/3
    Square,
    /// sin(pi x), integral 2/pi
    SinPi,
    /// 1 for x >= 0.5, integral 1/2
    Step,
}

impl Integrand {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Integrand::Square => x * x,
            Integrand::SinPi => (PI * x).sin(),
            Integrand::Step => {
                if x >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn integral(self) -> f64 {
        match self {
            Integrand::Square => 1.0 / 3.0,
            Integrand::SinPi => 2.0 / PI,
            Integrand::Step => 0.5,
        }
    }
}

impl FromStr for Integrand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" | "x2" | "x^2" => Ok(Integrand::Square),
            "sin-pi" => Ok(Integrand::SinPi),
            "step" => Ok(Integrand::Step),
            _ => Err(Error::Config(format!("unknown integrand {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum McTask {
    PiEstimate,
    Integrate1d { integrand: Integrand },
    WalkReturn { steps: u32 },
}

impl McTask {
    pub fn truth(&self) -> f64 {
        match *self {
            McTask::PiEstimate => PI,
            McTask::Integrate1d { integrand } => integrand.integral(),
            McTask::WalkReturn { steps } => walk_return_probability(steps),
        }
    }
}

impl fmt::Display for McTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            McTask::PiEstimate => write!(f, "pi-estimate"),
            McTask::Integrate1d { integrand } => write!(f, "integrate-1d({integrand:?})"),
            McTask::WalkReturn { steps } => write!(f, "walk-return({steps})"),
        }
    }
}

/// `C(steps, steps/2) / 2^steps` as the product of `(2i - 1) / 2i`.
pub fn walk_return_probability(steps: u32) -> f64 {
    (1..=steps / 2).fold(1.0, |acc, i| acc * (2 * i - 1) as f64 / (2 * i) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub task: McTask,
    pub estimate: f64,
    pub truth: f64,
    pub abs_error: f64,
    pub n: u64,
    pub std_error: f64,
    pub generator: GeneratorDescriptor,
}

impl McEstimate {
    fn new(
        task: McTask,
        estimate: f64,
        n: u64,
        std_error: f64,
        generator: GeneratorDescriptor,
    ) -> Self {
        let truth = task.truth();
        Self {
            task,
            estimate,
            truth,
            abs_error: (estimate - truth).abs(),
            n,
            std_error,
            generator,
        }
    }

    /// `abs_error / std_error`; `None` when the standard error is zero.
    pub fn z_score(&self) -> Option<f64> {
        let z = self.abs_error / self.std_error;
        z.is_finite().then_some(z)
    }
}

fn require_samples(n: u64) -> Result<()> {
    if n == 0 {
        Err(Error::Config("sample count must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn binomial_se(hits: u64, n: u64) -> f64 {
    let p = hits as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Four times the fraction of pairs `(x, y)` with `x^2 + y^2 < 1`.
pub fn estimate_pi(gen: &mut Generator, n: u64) -> Result<McEstimate> {
    require_samples(n)?;
    let mut inside = 0u64;
    for _ in 0..n {
        let x = gen.next_unit()?;
        let y = gen.next_unit()?;
        if x * x + y * y < 1.0 {
            inside += 1;
        }
    }
    let estimate = 4.0 * inside as f64 / n as f64;
    Ok(McEstimate::new(
        McTask::PiEstimate,
        estimate,
        n,
        4.0 * binomial_se(inside, n),
        gen.descriptor(),
    ))
}

/// Sample mean of `f` over `n` uniform draws.
pub fn integrate_1d(gen: &mut Generator, f: Integrand, n: u64) -> Result<McEstimate> {
    require_samples(n)?;
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let v = f.eval(gen.next_unit()?);
        sum += v;
        sum_sq += v * v;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate::new(
        McTask::Integrate1d { integrand: f },
        mean,
        n,
        (var / nf).sqrt(),
        gen.descriptor(),
    ))
}

/// Fraction of `trials` symmetric walks of `steps` steps that end at the
/// origin. A draw below one half is a `+1` step.
pub fn walk_return(gen: &mut Generator, steps: u32, trials: u64) -> Result<McEstimate> {
    if !steps.is_multiple_of(2) {
        return Err(Error::Config(format!("walk length {steps} must be even")));
    }
    require_samples(trials)?;
    let mut returned = 0u64;
    for _ in 0..trials {
        let mut pos = 0i64;
        for _ in 0..steps {
            pos += if gen.next_unit()? < 0.5 { 1 } else { -1 };
        }
        if pos == 0 {
            returned += 1;
        }
    }
    Ok(McEstimate::new(
        McTask::WalkReturn { steps },
        returned as f64 / trials as f64,
        trials,
        binomial_se(returned, trials),
        gen.descriptor(),
    ))
}

/// Runs `task` with `n` samples (pairs for pi, trials for walks).
pub fn run_task(task: McTask, gen: &mut Generator, n: u64) -> Result<McEstimate> {
    match task {
        McTask::PiEstimate => estimate_pi(gen, n),
        McTask::Integrate1d { integrand } => integrate_1d(gen, integrand, n),
        McTask::WalkReturn { steps } => walk_return(gen, steps, n),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub generator: GeneratorDescriptor,
    pub estimate: Option<McEstimate>,
    pub z_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub task: McTask,
    pub n: u64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "generator",
            "task",
            "n",
            "estimate",
            "truth",
            "abs_error",
            "std_error",
            "z_score",
            "status",
            "descriptor",
        ])?;
        for row in &self.rows {
            let descriptor = serde_json::to_string(&row.generator)?;
            let mut rec = vec![row.label.clone(), self.task.to_string(), self.n.to_string()];
            match &row.estimate {
                Some(e) => {
                    rec.extend([
                        format!("{:.10}", e.estimate),
                        format!("{:.10}", e.truth),
                        format!("{:.10}", e.abs_error),
                        format!("{:.10}", e.std_error),
                        row.z_score.map_or("inf".into(), |z| format!("{z:.4}")),
                        "ok".into(),
                    ]);
                }
                None => {
                    rec.extend(std::iter::repeat_n(String::new(), 5));
                    rec.push(format!("failed: {}", row.error.as_deref().unwrap_or("")));
                }
            }
            rec.push(descriptor);
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// One row per generator, all with the same task and sample count. A row
/// that fails is marked and the others still run.
pub fn compare_generators(
    task: McTask,
    generators: &[GeneratorDescriptor],
    n: u64,
) -> Result<ComparisonTable> {
    Ok(compare_inner(task, generators, n, false)?.0)
}

/// Like [`compare_generators`], also returning the entropy bits each
/// non-reproducible generator consumed, so the run can be replayed.
pub fn compare_generators_recorded(
    task: McTask,
    generators: &[GeneratorDescriptor],
    n: u64,
) -> Result<(ComparisonTable, Vec<Option<BitStream>>)> {
    compare_inner(task, generators, n, true)
}

fn compare_inner(
    task: McTask,
    generators: &[GeneratorDescriptor],
    n: u64,
    record: bool,
) -> Result<(ComparisonTable, Vec<Option<BitStream>>)> {
    if generators.len() < 2 {
        return Err(Error::Config(
            "a comparison needs at least two generators".into(),
        ));
    }
    let (rows, recordings) = generators
        .par_iter()
        .map(|d| {
            let mut recording = None;
            let result = Generator::open(d).and_then(|mut g| {
                let capture = record && !d.is_reproducible();
                if capture {
                    if let Some(s) = g.entropy_source_mut() {
                        s.start_recording();
                    }
                }
                let r = run_task(task, &mut g, n);
                if capture {
                    recording = g.entropy_source_mut().and_then(|s| s.take_recording());
                }
                r
            });
            let row = match result {
                Ok(e) => ComparisonRow {
                    label: d.label(),
                    generator: d.clone(),
                    z_score: e.z_score(),
                    estimate: Some(e),
                    error: None,
                },
                Err(err) => ComparisonRow {
                    label: d.label(),
                    generator: d.clone(),
                    estimate: None,
                    z_score: None,
                    error: Some(err.to_string()),
                },
            };
            (row, recording)
        })
        .unzip();
    Ok((ComparisonTable { task, n, rows }, recordings))
}

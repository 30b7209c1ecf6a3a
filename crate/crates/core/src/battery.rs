//! Statistical randomness tests and the battery that runs them.
//!
//! Every test is a pure function of its input and parameters. A test that
//! cannot be evaluated (too little data, failed prerequisite) returns an
//! error; the battery records such cases as not-applicable entries and keeps
//! going. Raw p-values are always reported, failing or not.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::io::BitFileMode;
use crate::special::{chi_square_sf, kolmogorov_sf, normal_two_sided};
use crate::stream::{bits_to_symbols, BitStream, Provenance, SymbolStream, UnitReal};

pub const DEFAULT_SIGNIFICANCE: f64 = 1e-4;
const MIN_BITS: usize = 100;
const SERIAL_CELL_BUDGET: u64 = 4096;
const PREFIX_CELL_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub parameters: BTreeMap<String, f64>,
    pub n: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub significance: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TestResult {
    fn evaluated(
        name: &str,
        parameters: BTreeMap<String, f64>,
        n: usize,
        statistic: f64,
        p_value: f64,
    ) -> Self {
        TestResult {
            test_name: name.to_string(),
            parameters,
            n,
            statistic: Some(statistic),
            p_value: Some(p_value.clamp(0.0, 1.0)),
            significance: DEFAULT_SIGNIFICANCE,
            status: Status::Pass,
            note: None,
        }
        .judged(DEFAULT_SIGNIFICANCE)
    }

    pub fn not_applicable(spec: &TestSpec, n: usize, reason: String) -> Self {
        TestResult {
            test_name: spec.name().to_string(),
            parameters: spec.parameters(),
            n,
            statistic: None,
            p_value: None,
            significance: DEFAULT_SIGNIFICANCE,
            status: Status::NotApplicable,
            note: Some(reason),
        }
    }

    /// Re-evaluates pass/fail at `significance`: pass iff `p >= significance`.
    pub fn judged(mut self, significance: f64) -> Self {
        self.significance = significance;
        if let Some(p) = self.p_value {
            self.status = if p >= significance {
                Status::Pass
            } else {
                Status::Fail
            };
        }
        self
    }

    pub fn pass(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn p(&self) -> f64 {
        self.p_value.unwrap_or(f64::NAN)
    }
}

fn params<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn need(test: &'static str, needed: usize, got: usize) -> Result<()> {
    if got < needed {
        Err(Error::InsufficientData { test, needed, got })
    } else {
        Ok(())
    }
}

/// Frequency test: `|S| / sqrt(n)` with `S = sum(2b - 1)`.
pub fn monobit(bits: &BitStream) -> Result<TestResult> {
    let n = bits.len();
    need("monobit", MIN_BITS, n)?;
    let s = 2 * bits.ones() as i64 - n as i64;
    let stat = (s as f64).abs() / (n as f64).sqrt();
    Ok(TestResult::evaluated(
        "monobit",
        BTreeMap::new(),
        n,
        stat,
        normal_two_sided(stat),
    ))
}

/// Runs test on the number of maximal runs `V`. Not applicable when the ones
/// proportion is `2/sqrt(n)` or more away from one half.
pub fn runs_test(bits: &BitStream) -> Result<TestResult> {
    let n = bits.len();
    need("runs", MIN_BITS, n)?;
    let nf = n as f64;
    let pi = bits.ones() as f64 / nf;
    let tau = 2.0 / nf.sqrt();
    if (pi - 0.5).abs() >= tau {
        return Err(Error::NotApplicable {
            test: "runs",
            reason: format!("ones proportion {pi:.6} fails the frequency prerequisite"),
        });
    }
    let b = bits.bits();
    let v = 1 + b.windows(2).filter(|w| w[0] != w[1]).count();
    let vf = v as f64;
    let expected = 2.0 * nf * pi * (1.0 - pi);
    let p =
        crate::special::erfc((vf - expected).abs() / (2.0 * (2.0 * nf).sqrt() * pi * (1.0 - pi)));
    Ok(TestResult::evaluated(
        "runs",
        params([("pi", pi)]),
        n,
        vf,
        p,
    ))
}

/// Pearson chi-square of symbol counts against the uniform distribution on
/// `Z/qZ`, `q - 1` degrees of freedom.
pub fn chi_square_uniformity(s: &SymbolStream) -> Result<TestResult> {
    let q = s.q() as usize;
    let n = s.len();
    need("chi-square", 5 * q, n)?;
    let mut counts = vec![0u64; q];
    for &x in s.symbols() {
        counts[x as usize] += 1;
    }
    let expected = n as f64 / q as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    Ok(TestResult::evaluated(
        "chi-square",
        params([("q", q as f64)]),
        n,
        stat,
        chi_square_sf(stat, (q - 1) as f64),
    ))
}

/// Chi-square over non-overlapping `dim`-tuples, `q^dim - 1` degrees of
/// freedom.
pub fn serial_test(s: &SymbolStream, dim: u32) -> Result<TestResult> {
    if !(2..=3).contains(&dim) {
        return Err(Error::Domain(format!(
            "serial test dimension {dim} not in {{2, 3}}"
        )));
    }
    let q = s.q() as u64;
    let cells = q.checked_pow(dim).unwrap_or(u64::MAX);
    if cells > SERIAL_CELL_BUDGET {
        return Err(Error::CellBudgetExceeded {
            cells,
            budget: SERIAL_CELL_BUDGET,
        });
    }
    let n = s.len();
    need("serial", 5 * cells as usize, n)?;
    let mut counts = vec![0u64; cells as usize];
    let tuples = s.symbols().chunks_exact(dim as usize);
    let t = tuples.len();
    for tuple in tuples {
        let idx = tuple.iter().fold(0u64, |acc, &x| acc * q + x as u64);
        counts[idx as usize] += 1;
    }
    let expected = t as f64 / cells as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    Ok(TestResult::evaluated(
        "serial",
        params([("q", q as f64), ("dim", dim as f64)]),
        n,
        stat,
        chi_square_sf(stat, (cells - 1) as f64),
    ))
}

/// Agreements between `b[i]` and `b[i + lag]`, normalized and tested
/// two-sided against the fair-coin expectation.
pub fn autocorrelation(bits: &BitStream, lag: usize) -> Result<TestResult> {
    let n = bits.len();
    need("autocorrelation", MIN_BITS, n)?;
    if lag == 0 {
        return Err(Error::Domain(
            "autocorrelation lag must be at least 1".into(),
        ));
    }
    need("autocorrelation", 2 * lag, n)?;
    let b = bits.bits();
    let pairs = n - lag;
    let agree = b[..pairs]
        .iter()
        .zip(&b[lag..])
        .filter(|(x, y)| x == y)
        .count();
    let m = pairs as f64;
    let z = (agree as f64 - m / 2.0) / (m / 4.0).sqrt();
    Ok(TestResult::evaluated(
        "autocorrelation",
        params([("lag", lag as f64)]),
        n,
        z,
        normal_two_sided(z),
    ))
}

// sum over observed m-bit patterns (cyclic) of (c/n) ln(c/n)
fn phi(bits: &[u8], m: u32) -> f64 {
    let n = bits.len();
    let mask = (1usize << m) - 1;
    let mut counts = vec![0u64; 1 << m];
    let mut v = 0usize;
    for &b in bits.iter().take(m as usize) {
        v = (v << 1) | b as usize;
    }
    for i in 0..n {
        counts[v] += 1;
        v = ((v << 1) | bits[(i + m as usize) % n] as usize) & mask;
    }
    let nf = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / nf;
            p * p.ln()
        })
        .sum()
}

/// Approximate entropy `ApEn(m) = Phi(m) - Phi(m+1)` with cyclic extension;
/// `2n(ln 2 - ApEn)` is chi-square with `2^m` degrees of freedom.
pub fn approx_entropy(bits: &BitStream, m: u32) -> Result<TestResult> {
    let n = bits.len();
    need("approx-entropy", MIN_BITS, n)?;
    if m == 0 {
        return Err(Error::Domain(
            "approximate entropy block length must be at least 1".into(),
        ));
    }
    let max = ((n as f64).log2() - 5.0).floor().max(0.0) as u32;
    if m > max {
        return Err(Error::BlockTooLarge { m, max });
    }
    let b = bits.bits();
    let apen = phi(b, m) - phi(b, m + 1);
    let stat = (2.0 * n as f64 * (std::f64::consts::LN_2 - apen)).max(0.0);
    let mut p = params([("m", m as f64)]);
    p.insert("apen".into(), apen);
    Ok(TestResult::evaluated(
        "approx-entropy",
        p,
        n,
        stat,
        chi_square_sf(stat, (1u64 << m) as f64),
    ))
}

/// Exact one-dimensional star discrepancy
/// `max_i max(i/n - x_(i), x_(i) - (i-1)/n)` over the sorted points.
pub fn star_discrepancy(points: &[UnitReal]) -> Result<f64> {
    let values: Vec<f64> = points.iter().map(|p| p.value()).collect();
    star_discrepancy_values(values)
}

fn star_discrepancy_values(mut values: Vec<f64>) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData {
            test: "star-discrepancy",
            needed: 1,
            got: 0,
        });
    }
    if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("point {bad} outside [0, 1]")));
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let i = i as f64;
            ((i + 1.0) / n - x).max(x - i / n)
        })
        .fold(0.0, f64::max))
}

/// Kolmogorov-Smirnov test of values against the uniform distribution on
/// `[0, 1]`. Returns `(D, p)`.
pub fn ks_uniform(values: &[f64]) -> Result<(f64, f64)> {
    let d = star_discrepancy_values(values.to_vec())?;
    let sn = (values.len() as f64).sqrt();
    Ok((d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)))
}

/// Fraction of all `q^d` length-`d` prefixes observed, as a function of the
/// number of sequences examined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub depth: u32,
    pub q: u32,
    pub points: Vec<(usize, f64)>,
}

impl CoverageCurve {
    pub fn final_fraction(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }
}

fn log_checkpoints(total: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut decade = 1usize;
    'outer: loop {
        for m in [1, 2, 5] {
            let v = m * decade;
            if v >= total {
                break 'outer;
            }
            out.push(v);
        }
        decade *= 10;
    }
    out.push(total);
    out
}

pub fn prefix_coverage(streams: &[SymbolStream], d: u32) -> Result<CoverageCurve> {
    let Some(first) = streams.first() else {
        return Err(Error::InsufficientData {
            test: "prefix-coverage",
            needed: 1,
            got: 0,
        });
    };
    let q = first.q();
    if let Some(s) = streams.iter().find(|s| s.q() != q) {
        return Err(Error::Config(format!(
            "prefix coverage needs a common q; found {} and {}",
            q,
            s.q()
        )));
    }
    let cells = (q as u64).checked_pow(d).unwrap_or(u64::MAX);
    if cells > PREFIX_CELL_BUDGET {
        return Err(Error::CellBudgetExceeded {
            cells,
            budget: PREFIX_CELL_BUDGET,
        });
    }
    if let Some(s) = streams.iter().find(|s| s.len() < d as usize) {
        return Err(Error::InsufficientData {
            test: "prefix-coverage",
            needed: d as usize,
            got: s.len(),
        });
    }
    let mut seen = vec![false; cells as usize];
    let mut covered = 0u64;
    let checkpoints = log_checkpoints(streams.len());
    let mut points = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for (i, s) in streams.iter().enumerate() {
        let idx = s.symbols()[..d as usize]
            .iter()
            .fold(0u64, |acc, &m| acc * q as u64 + m as u64) as usize;
        if !seen[idx] {
            seen[idx] = true;
            covered += 1;
        }
        if i + 1 == checkpoints[next] {
            points.push((i + 1, covered as f64 / cells as f64));
            next += 1;
        }
    }
    Ok(CoverageCurve {
        depth: d,
        q,
        points,
    })
}

/// A test selection entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestSpec {
    Monobit,
    Runs,
    ChiSquare { q: u32 },
    Serial { q: u32, dim: u32 },
    Autocorrelation { lag: usize },
    ApproxEntropy { m: u32 },
}

impl TestSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TestSpec::Monobit => "monobit",
            TestSpec::Runs => "runs",
            TestSpec::ChiSquare { .. } => "chi-square",
            TestSpec::Serial { .. } => "serial",
            TestSpec::Autocorrelation { .. } => "autocorrelation",
            TestSpec::ApproxEntropy { .. } => "approx-entropy",
        }
    }

    pub fn parameters(&self) -> BTreeMap<String, f64> {
        match *self {
            TestSpec::Monobit | TestSpec::Runs => BTreeMap::new(),
            TestSpec::ChiSquare { q } => params([("q", q as f64)]),
            TestSpec::Serial { q, dim } => params([("q", q as f64), ("dim", dim as f64)]),
            TestSpec::Autocorrelation { lag } => params([("lag", lag as f64)]),
            TestSpec::ApproxEntropy { m } => params([("m", m as f64)]),
        }
    }

    /// Runs this test on a bit stream; symbol tests read the bits through
    /// [`bits_to_symbols`].
    pub fn run(&self, bits: &BitStream) -> Result<TestResult> {
        match *self {
            TestSpec::Monobit => monobit(bits),
            TestSpec::Runs => runs_test(bits),
            TestSpec::ChiSquare { q } => chi_square_uniformity(&bits_to_symbols(bits, q)?),
            TestSpec::Serial { q, dim } => serial_test(&bits_to_symbols(bits, q)?, dim),
            TestSpec::Autocorrelation { lag } => autocorrelation(bits, lag),
            TestSpec::ApproxEntropy { m } => approx_entropy(bits, m),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default = "default_suite")]
    pub tests: Vec<TestSpec>,
}

fn default_significance() -> f64 {
    DEFAULT_SIGNIFICANCE
}

/// Frequency, order, tuple, correlation and entropy checks.
pub fn default_suite() -> Vec<TestSpec> {
    let mut tests = vec![
        TestSpec::Monobit,
        TestSpec::Runs,
        TestSpec::ChiSquare { q: 16 },
        TestSpec::Serial { q: 4, dim: 2 },
        TestSpec::Serial { q: 8, dim: 3 },
    ];
    tests.extend(
        [1, 2, 8, 64, 1024]
            .into_iter()
            .map(|lag| TestSpec::Autocorrelation { lag }),
    );
    tests.push(TestSpec::ApproxEntropy { m: 2 });
    tests
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            significance: DEFAULT_SIGNIFICANCE,
            tests: default_suite(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub not_applicable: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub provenance: Provenance,
    pub bit_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<BitFileMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub stream: StreamInfo,
    pub significance: f64,
    pub results: Vec<TestResult>,
    pub summary: Summary,
}

impl BatteryReport {
    /// 0 when everything passed, 1 on any failure, 2 when some test was not
    /// applicable and none failed.
    pub fn exit_status(&self) -> i32 {
        if self.summary.failed > 0 {
            1
        } else if self.summary.not_applicable > 0 {
            2
        } else {
            0
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per test: name, parameters, statistic, p_value, pass.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "parameters", "statistic", "p_value", "pass"])?;
        for r in &self.results {
            let parameters = r
                .parameters
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";");
            let fmt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:e}"));
            let pass = match r.status {
                Status::Pass => "true",
                Status::Fail => "false",
                Status::NotApplicable => "n/a",
            };
            w.write_record([
                r.test_name.as_str(),
                parameters.as_str(),
                fmt(r.statistic).as_str(),
                fmt(r.p_value).as_str(),
                pass,
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Runs every selected test (concurrently); results keep selection order.
pub fn run_battery(stream: &BitStream, config: &BatteryConfig) -> BatteryReport {
    let results: Vec<TestResult> = config
        .tests
        .par_iter()
        .map(|spec| match spec.run(stream) {
            Ok(r) => r.judged(config.significance),
            Err(e) => TestResult::not_applicable(spec, stream.len(), e.to_string())
                .judged(config.significance),
        })
        .collect();
    let mut summary = Summary::default();
    for r in &results {
        match r.status {
            Status::Pass => summary.passed += 1,
            Status::Fail => summary.failed += 1,
            Status::NotApplicable => summary.not_applicable += 1,
        }
    }
    BatteryReport {
        stream: StreamInfo {
            provenance: stream.provenance().clone(),
            bit_count: stream.len(),
            mode: None,
        },
        significance: config.significance,
        results,
        summary,
    }
}

//! The `hybridrand` command line: run configuration, flag handling and the
//! command implementations.
//!
//! Every command that writes a primary output also writes a sidecar
//! `<out>.meta.json`. Its `replay` entry is a complete run configuration that
//! reproduces the output byte for byte. Live entropy consumed during the run is
//! saved next to the output (`<out>.entropy.bin`, or `<out>.entropy-<i>.bin`
//! for multi-generator demos) and the replay configuration reads it back.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::{
    autocorrelation, default_suite, run_battery, serial_test, BatteryConfig, Status, TestResult,
    TestSpec, DEFAULT_SIGNIFICANCE,
};
use crate::combiner::{CombinerDescriptor, MixRate, RsAccounting};
use crate::entropy::EntropySourceDescriptor;
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorDescriptor};
use crate::io::{self, BitFileMode, StreamMetadata};
use crate::montecarlo::{compare_generators_recorded, Integrand, McTask};
use crate::prng::{Preset, PrngDescriptor};
use crate::stream::{symbols_to_bits, BitStream, Provenance};

/// Sample count for the demos when none is given.
pub const DEMO_COUNT: u64 = 1_000_000;
/// Seed for the demos when none is given.
pub const DEMO_SEED: u64 = 1;
/// Autocorrelation lags reported by `demo-defect` by default.
pub const DEMO_LAGS: [usize; 3] = [1, 2, 16];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Generate,
    Test,
    Dice,
    DemoDefect,
    DemoMc,
    Replay,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.to_possible_value().expect("no skipped variants");
        f.write_str(s.get_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Raw,
    Ascii,
    Json,
    Csv,
}

/// One invocation. Loaded from `--config`, then overridden field by field by
/// flags. The copy stored in a sidecar has every default filled in.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    /// Producer for `generate` and `dice`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorDescriptor>,
    /// Producers compared by the demos.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<GeneratorDescriptor>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Stream file for `test`, sidecar for `replay`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_mode: Option<BitFileMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<u64>,
    /// Symbols for `dice` and the defect demo, samples for the MC demo.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix_rate: Option<MixRate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<Vec<TestSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<McTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lags: Option<Vec<usize>>,
    /// Recorded entropy to read instead of each generator's own source, in
    /// generator order. Filled in by the sidecar's replay configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_replay: Option<Vec<Option<PathBuf>>>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// `self` with every field that is set in `flags` replaced.
    pub fn overlay(mut self, flags: RunConfig) -> Self {
        overlay!(
            self,
            flags,
            command,
            generator,
            generators,
            out,
            input,
            input_mode,
            bits,
            count,
            q,
            mix_rate,
            significance,
            format,
            seed,
            preset,
            tests,
            task,
            lags,
            entropy_replay
        );
        self
    }
}

/// Task names accepted by `--task`: `pi`, `square`, `sin-pi`, `step`,
/// `walk:<steps>`.
pub fn parse_task(s: &str) -> Result<McTask> {
    if let Some(steps) = s.strip_prefix("walk:") {
        let steps = steps
            .parse()
            .map_err(|_| Error::Config(format!("bad walk length in {s:?}")))?;
        return Ok(McTask::WalkReturn { steps });
    }
    match s {
        "pi" | "pi-estimate" => Ok(McTask::PiEstimate),
        _ => Ok(McTask::Integrate1d {
            integrand: s.parse::<Integrand>()?,
        }),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hybridrand",
    version,
    about = "Hybrid random streams, randomness tests and Monte Carlo checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Write a bit stream and its sidecar
    Generate(Flags),
    /// Run the test battery on a stream file
    Test(Flags),
    /// Write digital-dice symbols over Z/qZ
    Dice(Flags),
    /// Compare a defective generator, mix64 and a hybrid on serial and autocorrelation tests
    DemoDefect(Flags),
    /// Compare generators on a Monte Carlo task
    DemoMc(Flags),
    /// Re-run a command from a sidecar
    Replay(Flags),
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Stream file (test) or sidecar / output file (replay)
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub bits: Option<u64>,
    #[arg(long, value_name = "N")]
    pub count: Option<u64>,
    #[arg(long, value_name = "N")]
    pub q: Option<u32>,
    #[arg(long, value_name = "P/K")]
    pub mix_rate: Option<MixRate>,
    #[arg(long, value_name = "A")]
    pub significance: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, value_enum, value_name = "MODE")]
    pub input_mode: Option<BitFileModeArg>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "NAME")]
    pub preset: Option<Preset>,
    /// pi, square, sin-pi, step or walk:<steps>
    #[arg(long, value_name = "TASK")]
    pub task: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BitFileModeArg {
    Raw,
    Ascii,
}

impl From<BitFileModeArg> for BitFileMode {
    fn from(m: BitFileModeArg) -> Self {
        match m {
            BitFileModeArg::Raw => BitFileMode::Raw,
            BitFileModeArg::Ascii => BitFileMode::Ascii,
        }
    }
}

impl Cli {
    /// Merges `--config` (if any) with the flags.
    pub fn into_config(self) -> Result<RunConfig> {
        let (command, flags) = match self.command {
            CliCommand::Generate(f) => (Command::Generate, f),
            CliCommand::Test(f) => (Command::Test, f),
            CliCommand::Dice(f) => (Command::Dice, f),
            CliCommand::DemoDefect(f) => (Command::DemoDefect, f),
            CliCommand::DemoMc(f) => (Command::DemoMc, f),
            CliCommand::Replay(f) => (Command::Replay, f),
        };
        let base = match &flags.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(c) = base.command {
            if c != command {
                return Err(Error::Config(format!(
                    "config file is for `{c}` but `{command}` was invoked"
                )));
            }
        }
        let top = RunConfig {
            command: Some(command),
            out: flags.out,
            input: flags.input,
            input_mode: flags.input_mode.map(Into::into),
            bits: flags.bits,
            count: flags.count,
            q: flags.q,
            mix_rate: flags.mix_rate,
            significance: flags.significance,
            format: flags.format,
            seed: flags.seed,
            preset: flags.preset,
            task: flags.task.as_deref().map(parse_task).transpose()?,
            ..RunConfig::default()
        };
        Ok(base.overlay(top))
    }
}

/// What a finished command hands back to `main`.
#[derive(Debug, Default)]
pub struct Outcome {
    pub exit_code: i32,
    /// Report text to print when no `--out` was given.
    pub stdout: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyUse {
    pub generator: String,
    pub entropy_bits_consumed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid: Option<RsAccounting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recording: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolMetadata {
    pub q: u32,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub command: Command,
    /// Configuration as run, defaults filled in.
    pub run: RunConfig,
    /// Configuration that reproduces the primary output exactly.
    pub replay: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<StreamMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<SymbolMetadata>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entropy: Vec<EntropyUse>,
}

impl Sidecar {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn execute(config: RunConfig) -> Result<Outcome> {
    match config.command {
        Some(Command::Generate) => cmd_generate(config),
        Some(Command::Test) => cmd_test(config),
        Some(Command::Dice) => cmd_dice(config),
        Some(Command::DemoDefect) => cmd_demo_defect(config),
        Some(Command::DemoMc) => cmd_demo_mc(config),
        Some(Command::Replay) => cmd_replay(config),
        None => Err(Error::Config("no command given".into())),
    }
}

fn require<T>(v: Option<T>, what: &str, cmd: Command) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("`{cmd}` needs {what}")))
}

fn default_ss(seed: Option<u64>, preset: Option<Preset>) -> Result<PrngDescriptor> {
    let seed = seed.unwrap_or(0);
    match preset {
        Some(p) => PrngDescriptor::preset(p, seed),
        None => Ok(PrngDescriptor::mix64(seed)),
    }
}

fn override_prng(
    d: &PrngDescriptor,
    seed: Option<u64>,
    preset: Option<Preset>,
) -> Result<PrngDescriptor> {
    let seed = seed.unwrap_or(d.seed());
    match preset {
        Some(p) => PrngDescriptor::preset(p, seed),
        None => d.with_seed(seed),
    }
}

/// The single producer of `generate` and `dice`, with flag overrides
/// applied. Applying them twice gives the same result.
fn resolve_generator(cfg: &RunConfig, default_q: u32) -> Result<GeneratorDescriptor> {
    let desc = match &cfg.generator {
        Some(d) => d.clone(),
        None => GeneratorDescriptor::Hybrid(
            CombinerDescriptor::dice(
                cfg.q.unwrap_or(default_q),
                EntropySourceDescriptor::OsEntropy,
                default_ss(cfg.seed, cfg.preset)?,
            )
            .with_mix_rate(cfg.mix_rate.unwrap_or(MixRate::ONE)),
        ),
    };
    Ok(match desc {
        GeneratorDescriptor::Prng(d) => {
            if cfg.mix_rate.is_some() {
                return Err(Error::Config("--mix-rate needs a hybrid generator".into()));
            }
            GeneratorDescriptor::Prng(override_prng(&d, cfg.seed, cfg.preset)?)
        }
        GeneratorDescriptor::Entropy(e) => {
            if cfg.seed.is_some() || cfg.preset.is_some() || cfg.mix_rate.is_some() {
                return Err(Error::Config(
                    "--seed, --preset and --mix-rate need a generator with a deterministic part"
                        .into(),
                ));
            }
            GeneratorDescriptor::Entropy(e)
        }
        GeneratorDescriptor::Hybrid(mut c) => {
            c.ss = override_prng(&c.ss, cfg.seed, cfg.preset)?;
            if let Some(q) = cfg.q {
                c.q = q;
            }
            if let Some(m) = cfg.mix_rate {
                c.mix_rate = m;
            }
            c.validate()?;
            GeneratorDescriptor::Hybrid(c)
        }
    })
}

/// `desc` with its entropy source replaced by a replay of `path`.
pub fn pin_entropy(desc: &GeneratorDescriptor, path: &Path) -> GeneratorDescriptor {
    let replay = EntropySourceDescriptor::file_replay(path, BitFileMode::Raw);
    match desc {
        GeneratorDescriptor::Prng(_) => desc.clone(),
        GeneratorDescriptor::Entropy(_) => GeneratorDescriptor::Entropy(replay),
        GeneratorDescriptor::Hybrid(c) => GeneratorDescriptor::Hybrid(CombinerDescriptor {
            rs: replay,
            ..c.clone()
        }),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    Ok(std::path::absolute(path)?)
}

/// The descriptor to open for generator `i`: `desc` itself, or `desc` reading
/// the recording named in `entropy_replay`.
fn descriptor_to_open(
    cfg: &RunConfig,
    i: usize,
    desc: &GeneratorDescriptor,
) -> GeneratorDescriptor {
    match cfg.entropy_replay.as_ref().and_then(|v| v.get(i)) {
        Some(Some(path)) => pin_entropy(desc, path),
        _ => desc.clone(),
    }
}

/// Opens `desc`, recording its entropy when it cannot be reproduced.
fn open_for_run(desc: &GeneratorDescriptor) -> Result<Generator> {
    let mut g = Generator::open(desc)?;
    if !desc.is_reproducible() {
        if let Some(s) = g.entropy_source_mut() {
            s.start_recording();
        }
    }
    Ok(g)
}

/// Saves a recording next to `out` and returns its path.
fn save_recording(
    recording: Option<BitStream>,
    out: &Path,
    suffix: &str,
) -> Result<Option<PathBuf>> {
    let Some(rec) = recording else {
        return Ok(None);
    };
    let path = absolute(&with_suffix(out, suffix))?;
    io::write_bits(&path, &rec, BitFileMode::Raw)?;
    let meta = serde_json::json!({ "stream": StreamMetadata::for_stream(&rec, BitFileMode::Raw) });
    io::write_atomic(
        &io::sidecar_path(&path),
        serde_json::to_string_pretty(&meta)?.as_bytes(),
    )?;
    Ok(Some(path))
}

fn entropy_use(
    desc: &GeneratorDescriptor,
    g: &Generator,
    recording: Option<PathBuf>,
) -> EntropyUse {
    EntropyUse {
        generator: desc.label(),
        entropy_bits_consumed: g.entropy_bits_consumed(),
        hybrid: g.accounting(),
        recording,
    }
}

/// Recordings for the replay configuration: new ones where this run recorded,
/// otherwise whatever this run was already replaying.
fn merged_replay(cfg: &RunConfig, new: Vec<Option<PathBuf>>) -> Option<Vec<Option<PathBuf>>> {
    let merged: Vec<Option<PathBuf>> = new
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            p.or_else(|| {
                cfg.entropy_replay
                    .as_ref()
                    .and_then(|v| v.get(i).cloned().flatten())
            })
        })
        .collect();
    merged.iter().any(Option::is_some).then_some(merged)
}

fn write_sidecar(out: &Path, sidecar: &Sidecar) -> Result<()> {
    io::write_atomic(
        &io::sidecar_path(out),
        serde_json::to_string_pretty(sidecar)?.as_bytes(),
    )
}

/// Writes the primary output to `out`, or returns it for stdout.
fn emit(out: Option<&Path>, text: String, exit_code: i32) -> Result<Outcome> {
    match out {
        Some(p) => {
            io::write_atomic(p, text.as_bytes())?;
            Ok(Outcome {
                exit_code,
                stdout: None,
            })
        }
        None => Ok(Outcome {
            exit_code,
            stdout: Some(text),
        }),
    }
}

fn cmd_generate(mut cfg: RunConfig) -> Result<Outcome> {
    let cmd = Command::Generate;
    let bits = require(cfg.bits, "--bits", cmd)?;
    let out = require(cfg.out.clone(), "--out", cmd)?;
    let mode = match cfg.format.unwrap_or(Format::Raw) {
        Format::Raw => BitFileMode::Raw,
        Format::Ascii => BitFileMode::Ascii,
        f => {
            return Err(Error::Config(format!(
                "`generate` writes raw or ascii streams, not {f:?}"
            )))
        }
    };
    let desc = resolve_generator(&cfg, 2)?;
    if cfg.q.is_some() && !matches!(desc, GeneratorDescriptor::Hybrid(_)) {
        return Err(Error::Config("--q needs a hybrid generator".into()));
    }
    cfg.generator = Some(desc.clone());
    cfg.format = Some(if mode == BitFileMode::Raw {
        Format::Raw
    } else {
        Format::Ascii
    });

    let mut g = open_for_run(&descriptor_to_open(&cfg, 0, &desc))?;
    let stream = g
        .next_bits(bits as usize)?
        .with_provenance(Provenance::Generator {
            descriptor: desc.clone(),
        });
    let rec = g.entropy_source_mut().and_then(|s| s.take_recording());
    let rec_path = save_recording(rec, &out, ".entropy.bin")?;

    io::write_bits(&out, &stream, mode)?;
    let replay = RunConfig {
        entropy_replay: merged_replay(&cfg, vec![rec_path.clone()]),
        ..cfg.clone()
    };
    write_sidecar(
        &out,
        &Sidecar {
            command: cmd,
            stream: Some(StreamMetadata::for_stream(&stream, mode)),
            symbols: None,
            entropy: vec![entropy_use(&desc, &g, rec_path)],
            run: cfg,
            replay,
        },
    )?;
    Ok(Outcome::default())
}

fn cmd_test(mut cfg: RunConfig) -> Result<Outcome> {
    let cmd = Command::Test;
    let input = require(cfg.input.clone(), "an input stream file", cmd)?;
    let format = cfg.format.unwrap_or(Format::Json);
    if !matches!(format, Format::Json | Format::Csv) {
        return Err(Error::Config(format!(
            "`test` reports as json or csv, not {format:?}"
        )));
    }
    let mode = cfg
        .input_mode
        .or_else(|| io::read_sidecar_stream(&input).map(|m| m.mode))
        .unwrap_or_default();
    let significance = cfg.significance.unwrap_or(DEFAULT_SIGNIFICANCE);
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::Config(format!(
            "significance {significance} not in (0, 1)"
        )));
    }
    let tests = cfg.tests.clone().unwrap_or_else(default_suite);
    cfg.input_mode = Some(mode);
    cfg.format = Some(format);
    cfg.significance = Some(significance);
    cfg.tests = Some(tests.clone());

    let stream = io::read_bits(&input, Some(mode))?;
    let mut report = run_battery(
        &stream,
        &BatteryConfig {
            significance,
            tests,
        },
    );
    report.stream.mode = Some(mode);
    let text = match format {
        Format::Csv => report.to_csv()?,
        _ => report.to_json()? + "\n",
    };
    let outcome = emit(cfg.out.as_deref(), text, report.exit_status())?;
    if let Some(out) = cfg.out.clone() {
        write_sidecar(
            &out,
            &Sidecar {
                command: cmd,
                replay: cfg.clone(),
                run: cfg,
                stream: None,
                symbols: None,
                entropy: Vec::new(),
            },
        )?;
    }
    Ok(outcome)
}

fn cmd_dice(mut cfg: RunConfig) -> Result<Outcome> {
    let cmd = Command::Dice;
    let out = require(cfg.out.clone(), "--out", cmd)?;
    let count = require(cfg.count, "--count", cmd)?;
    if cfg.format.is_some() {
        return Err(Error::Config(
            "`dice` always writes newline-separated decimal symbols".into(),
        ));
    }
    let desc = resolve_generator(&cfg, 6)?;
    let q = match (&desc, cfg.q) {
        (GeneratorDescriptor::Hybrid(c), _) => c.q,
        (_, Some(q)) => q,
        _ => return Err(Error::Config("`dice` needs --q".into())),
    };
    cfg.generator = Some(desc.clone());
    cfg.q = Some(q);

    let mut g = open_for_run(&descriptor_to_open(&cfg, 0, &desc))?;
    let symbols = g.next_symbols(count as usize, q)?;
    let rec = g.entropy_source_mut().and_then(|s| s.take_recording());
    let rec_path = save_recording(rec, &out, ".entropy.bin")?;

    io::write_atomic(&out, &io::encode_symbols(&symbols))?;
    let replay = RunConfig {
        entropy_replay: merged_replay(&cfg, vec![rec_path.clone()]),
        ..cfg.clone()
    };
    write_sidecar(
        &out,
        &Sidecar {
            command: cmd,
            stream: None,
            symbols: Some(SymbolMetadata { q, count }),
            entropy: vec![entropy_use(&desc, &g, rec_path)],
            run: cfg,
            replay,
        },
    )?;
    Ok(Outcome::default())
}

/// The generators compared by `demo-defect` unless a list is configured:
/// the subject (RANDU by default), mix64, and a hybrid over the subject.
pub fn default_defect_generators(
    seed: u64,
    preset: Option<Preset>,
    q: u32,
    mix_rate: MixRate,
) -> Result<Vec<GeneratorDescriptor>> {
    let subject = PrngDescriptor::preset(preset.unwrap_or(Preset::Randu), seed)?;
    Ok(vec![
        GeneratorDescriptor::Prng(subject.clone()),
        GeneratorDescriptor::Prng(PrngDescriptor::mix64(seed)),
        GeneratorDescriptor::Hybrid(
            CombinerDescriptor::dice(q, EntropySourceDescriptor::OsEntropy, subject)
                .with_mix_rate(mix_rate),
        ),
    ])
}

/// The generators compared by `demo-mc` unless a list is configured.
pub fn default_mc_generators(
    seed: u64,
    preset: Option<Preset>,
    mix_rate: MixRate,
) -> Result<Vec<GeneratorDescriptor>> {
    let subject = PrngDescriptor::preset(preset.unwrap_or(Preset::Randu), seed)?;
    Ok(vec![
        GeneratorDescriptor::Prng(PrngDescriptor::mix64(seed)),
        GeneratorDescriptor::Prng(PrngDescriptor::lcg(5, 1, 16, 0)?),
        GeneratorDescriptor::Prng(subject.clone()),
        GeneratorDescriptor::Hybrid(
            CombinerDescriptor::dice(16, EntropySourceDescriptor::OsEntropy, subject)
                .with_mix_rate(mix_rate),
        ),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectRow {
    pub generator: String,
    pub descriptor: GeneratorDescriptor,
    pub result: TestResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectTable {
    pub q: u32,
    pub count: u64,
    pub significance: f64,
    pub rows: Vec<DefectRow>,
}

impl DefectTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "generator",
            "test",
            "parameters",
            "statistic",
            "p_value",
            "pass",
            "descriptor",
        ])?;
        for row in &self.rows {
            let r = &row.result;
            let params = r
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
                row.generator.as_str(),
                r.test_name.as_str(),
                params.as_str(),
                fmt(r.statistic).as_str(),
                fmt(r.p_value).as_str(),
                pass,
                serde_json::to_string(&row.descriptor)?.as_str(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn demo_format(cfg: &RunConfig, cmd: Command) -> Result<Format> {
    match cfg.format.unwrap_or(Format::Csv) {
        f @ (Format::Json | Format::Csv) => Ok(f),
        f => Err(Error::Config(format!(
            "`{cmd}` reports as json or csv, not {f:?}"
        ))),
    }
}

type RowsAndRecording = (Vec<DefectRow>, Option<BitStream>, EntropyUse);

fn defect_rows(
    desc: &GeneratorDescriptor,
    open: &GeneratorDescriptor,
    q: u32,
    count: u64,
    lags: &[usize],
    significance: f64,
) -> Result<RowsAndRecording> {
    let mut g = open_for_run(open)?;
    let symbols = g.next_symbols(count as usize, q)?;
    let rec = g.entropy_source_mut().and_then(|s| s.take_recording());
    let usage = entropy_use(desc, &g, None);
    let label = desc.label();
    let row = |result: TestResult| DefectRow {
        generator: label.clone(),
        descriptor: desc.clone(),
        result: result.judged(significance),
    };
    let mut rows = Vec::with_capacity(1 + lags.len());
    let serial = TestSpec::Serial { q, dim: 3 };
    rows.push(row(serial_test(&symbols, 3).unwrap_or_else(|e| {
        TestResult::not_applicable(&serial, symbols.len(), e.to_string())
    })));
    let bits = symbols_to_bits(&symbols);
    for &lag in lags {
        let spec = TestSpec::Autocorrelation { lag };
        let r = match &bits {
            Ok(b) => autocorrelation(b, lag)
                .unwrap_or_else(|e| TestResult::not_applicable(&spec, b.len(), e.to_string())),
            Err(e) => TestResult::not_applicable(&spec, 0, e.to_string()),
        };
        rows.push(row(r));
    }
    Ok((rows, rec, usage))
}

fn cmd_demo_defect(mut cfg: RunConfig) -> Result<Outcome> {
    let cmd = Command::DemoDefect;
    let format = demo_format(&cfg, cmd)?;
    let q = cfg.q.unwrap_or(16);
    let count = cfg.count.unwrap_or(DEMO_COUNT);
    let seed = cfg.seed.unwrap_or(DEMO_SEED);
    let significance = cfg.significance.unwrap_or(DEFAULT_SIGNIFICANCE);
    let lags = cfg.lags.clone().unwrap_or_else(|| DEMO_LAGS.to_vec());
    let generators = match cfg.generators.clone() {
        Some(g) => g,
        None => {
            default_defect_generators(seed, cfg.preset, q, cfg.mix_rate.unwrap_or(MixRate::ONE))?
        }
    };
    cfg.format = Some(format);
    cfg.q = Some(q);
    cfg.count = Some(count);
    cfg.seed = Some(seed);
    cfg.significance = Some(significance);
    cfg.lags = Some(lags.clone());
    cfg.generators = Some(generators.clone());

    let results = generators
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            defect_rows(
                d,
                &descriptor_to_open(&cfg, i, d),
                q,
                count,
                &lags,
                significance,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut recorded = Vec::new();
    let mut entropy = Vec::new();
    for (i, (r, rec, mut usage)) in results.into_iter().enumerate() {
        rows.extend(r);
        let path = match &cfg.out {
            Some(out) => save_recording(rec, out, &format!(".entropy-{i}.bin"))?,
            None => None,
        };
        usage.recording = path.clone();
        recorded.push(path);
        entropy.push(usage);
    }
    let table = DefectTable {
        q,
        count,
        significance,
        rows,
    };
    let text = match format {
        Format::Csv => table.to_csv()?,
        _ => serde_json::to_string_pretty(&table)? + "\n",
    };
    let outcome = emit(cfg.out.as_deref(), text, 0)?;
    if let Some(out) = cfg.out.clone() {
        let replay = RunConfig {
            entropy_replay: merged_replay(&cfg, recorded),
            ..cfg.clone()
        };
        write_sidecar(
            &out,
            &Sidecar {
                command: cmd,
                run: cfg,
                replay,
                stream: None,
                symbols: None,
                entropy,
            },
        )?;
    }
    Ok(outcome)
}

fn cmd_demo_mc(mut cfg: RunConfig) -> Result<Outcome> {
    let cmd = Command::DemoMc;
    let format = demo_format(&cfg, cmd)?;
    let count = cfg.count.unwrap_or(DEMO_COUNT);
    let seed = cfg.seed.unwrap_or(DEMO_SEED);
    let task = cfg.task.unwrap_or(McTask::PiEstimate);
    let generators = match cfg.generators.clone() {
        Some(g) => g,
        None => default_mc_generators(seed, cfg.preset, cfg.mix_rate.unwrap_or(MixRate::ONE))?,
    };
    cfg.format = Some(format);
    cfg.count = Some(count);
    cfg.seed = Some(seed);
    cfg.task = Some(task);
    cfg.generators = Some(generators.clone());

    let open: Vec<GeneratorDescriptor> = generators
        .iter()
        .enumerate()
        .map(|(i, d)| descriptor_to_open(&cfg, i, d))
        .collect();
    let (mut table, recordings) = compare_generators_recorded(task, &open, count)?;
    for (row, desc) in table.rows.iter_mut().zip(&generators) {
        row.label = desc.label();
        row.generator = desc.clone();
        if let Some(e) = &mut row.estimate {
            e.generator = desc.clone();
        }
    }
    let text = match format {
        Format::Csv => table.to_csv()?,
        _ => table.to_json()? + "\n",
    };
    let outcome = emit(cfg.out.as_deref(), text, 0)?;
    if let Some(out) = cfg.out.clone() {
        let mut recorded = Vec::new();
        let mut entropy = Vec::new();
        for (i, (desc, rec)) in generators.iter().zip(recordings).enumerate() {
            let bits = rec.as_ref().map(|r| r.len() as u64);
            let path = save_recording(rec, &out, &format!(".entropy-{i}.bin"))?;
            if path.is_some() {
                entropy.push(EntropyUse {
                    generator: desc.label(),
                    entropy_bits_consumed: bits,
                    hybrid: None,
                    recording: path.clone(),
                });
            }
            recorded.push(path);
        }
        let replay = RunConfig {
            entropy_replay: merged_replay(&cfg, recorded),
            ..cfg.clone()
        };
        write_sidecar(
            &out,
            &Sidecar {
                command: cmd,
                run: cfg,
                replay,
                stream: None,
                symbols: None,
                entropy,
            },
        )?;
    }
    Ok(outcome)
}

/// Re-runs the `replay` configuration of a sidecar. `input` may name the
/// sidecar itself or the output it belongs to; `--out` picks the new output
/// path (the original one when omitted).
fn cmd_replay(cfg: RunConfig) -> Result<Outcome> {
    let input = require(
        cfg.input.clone(),
        "a sidecar or output path",
        Command::Replay,
    )?;
    let sidecar_file = if input.to_string_lossy().ends_with(".meta.json") {
        input
    } else {
        io::sidecar_path(&input)
    };
    let sidecar = Sidecar::load(&sidecar_file)?;
    let mut run = sidecar.replay;
    if run.command == Some(Command::Replay) {
        return Err(Error::Config(
            "a replay sidecar cannot point at another replay".into(),
        ));
    }
    run.command = Some(sidecar.command);
    if cfg.out.is_some() {
        run.out = cfg.out;
    }
    execute(run)
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hybridrand::battery::chi_square_uniformity;
use hybridrand::cli::Sidecar;
use hybridrand::io::decode_symbols;
use hybridrand::prng::{PrngDescriptor, PrngState};
use serde_json::Value;

fn hybridrand(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybridrand"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    fs::write(dir.join(name), json).unwrap();
    name.to_string()
}

#[test]
fn generate_pattern_ascii() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"generator":{"entropy":{"kind":"deterministic-test","pattern":[170]}}}"#,
    );
    let out = hybridrand(
        dir.path(),
        &[
            "generate", "--config", &cfg, "--bits", "16", "--format", "ascii", "--out", "a.txt",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    assert_eq!(
        fs::read_to_string(dir.path().join("a.txt")).unwrap(),
        "1010101010101010"
    );
    let side = Sidecar::load(&dir.path().join("a.txt.meta.json")).unwrap();
    assert_eq!(side.stream.unwrap().bit_count, 16);
}

#[test]
fn generate_twice_from_replay_file_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("rs.bin"),
        (0..=255u8).cycle().take(8192).collect::<Vec<_>>(),
    )
    .unwrap();
    let cfg = write_config(
        d,
        "c.json",
        r#"{"generator":{"hybrid":{"q":4,"rs":{"kind":"file-replay","path":"rs.bin"},"ss":{"family":"mix64","seed":3}}}}"#,
    );
    for out in ["x.bin", "y.bin"] {
        let o = hybridrand(
            d,
            &[
                "generate", "--config", &cfg, "--bits", "20000", "--out", out,
            ],
        );
        assert!(o.status.success(), "{o:?}");
    }
    assert_eq!(
        fs::read(d.join("x.bin")).unwrap(),
        fs::read(d.join("y.bin")).unwrap()
    );
    assert!(!d.join("x.bin.entropy.bin").exists());
}

#[test]
fn sidecar_entropy_accounting_q8() {
    let dir = tempfile::tempdir().unwrap();
    let o = hybridrand(
        dir.path(),
        &[
            "generate",
            "--bits",
            "1000000",
            "--q",
            "8",
            "--mix-rate",
            "1",
            "--out",
            "h.bin",
        ],
    );
    assert!(o.status.success(), "{o:?}");
    let side = Sidecar::load(&dir.path().join("h.bin.meta.json")).unwrap();
    let acct = side.entropy[0].hybrid.unwrap();
    // q = 8 needs no rejection: 3 bits per symbol, ceil(10^6 / 3) symbols
    let symbols = 1_000_000u64.div_ceil(3);
    assert_eq!(acct.outputs, symbols);
    assert_eq!(acct.rs_bits_consumed, 3 * symbols);
    assert!(acct.rs_bits_consumed as f64 <= acct.rs_bits_expected);
    assert_eq!(side.entropy[0].entropy_bits_consumed, Some(3 * symbols));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"bits":100,"generator":{"prng":{"family":"mix64","seed":1}},"seed":9}"#,
    );
    let o = hybridrand(
        dir.path(),
        &[
            "generate", "--bits", "200", "--config", &cfg, "--out", "o.bin",
        ],
    );
    assert!(o.status.success(), "{o:?}");
    assert_eq!(fs::read(dir.path().join("o.bin")).unwrap().len(), 25);
    let side = Sidecar::load(&dir.path().join("o.bin.meta.json")).unwrap();
    let text = serde_json::to_string(&side.run.generator).unwrap();
    assert!(text.contains(r#""seed":9"#), "{text}");
}

#[test]
fn config_for_another_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"command":"dice"}"#);
    let o = hybridrand(
        dir.path(),
        &["generate", "--config", &cfg, "--bits", "8", "--out", "o"],
    );
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn exhausted_source_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("rs.bin"), [0xA5u8; 4]).unwrap();
    let cfg = write_config(
        d,
        "c.json",
        r#"{"generator":{"entropy":{"kind":"file-replay","path":"rs.bin"}}}"#,
    );
    let o = hybridrand(
        d,
        &[
            "generate", "--config", &cfg, "--bits", "64", "--out", "o.bin",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exhausted"));
    assert!(!d.join("o.bin").exists());
    assert!(!d.join("o.bin.meta.json").exists());
}

fn test_exit(dir: &Path, file: &str, extra: &[&str]) -> Output {
    let mut args = vec!["test", file];
    args.extend(extra);
    hybridrand(dir, &args)
}

#[test]
fn test_exit_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("zeros.bin"), vec![0u8; 125_000]).unwrap();
    assert_eq!(test_exit(d, "zeros.bin", &[]).status.code(), Some(1));

    fs::write(d.join("short.txt"), "0110".repeat(10)).unwrap();
    let o = test_exit(d, "short.txt", &["--input-mode", "ascii"]);
    assert_eq!(o.status.code(), Some(2));

    let o = hybridrand(
        d,
        &[
            "generate", "--bits", "1000000", "--q", "16", "--seed", "1", "--preset", "minstd",
            "--out", "g.bin",
        ],
    );
    assert!(o.status.success());
    let o = test_exit(d, "g.bin", &["--format", "csv", "--out", "r.csv"]);
    let rows = fs::read_to_string(d.join("r.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 11);
    assert!(matches!(o.status.code(), Some(0 | 1)));
}

#[test]
fn deterministic_stream_passes_default_suite() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(
        d,
        "c.json",
        r#"{"generator":{"prng":{"family":"mix64","seed":1}}}"#,
    );
    assert!(hybridrand(
        d,
        &["generate", "--config", &cfg, "--bits", "1000000", "--out", "m.bin"]
    )
    .status
    .success());
    let o = test_exit(d, "m.bin", &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["summary"]["passed"], 11);
    assert_eq!(report["stream"]["bit_count"], 1_000_000);
}

#[test]
fn malformed_ascii_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "0101x01").unwrap();
    let o = test_exit(dir.path(), "bad.txt", &["--input-mode", "ascii"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("offset 4"),
        "{o:?}"
    );
}

#[test]
fn dice_zero_offsets_reproduce_segments() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(
        d,
        "c.json",
        r#"{"generator":{"hybrid":{"q":6,"rs":{"kind":"deterministic-test","pattern":[0]},"ss":{"family":"mix64","seed":4}}}}"#,
    );
    assert!(hybridrand(
        d,
        &["dice", "--config", &cfg, "--count", "500", "--out", "d.txt"]
    )
    .status
    .success());
    let got = decode_symbols(&fs::read_to_string(d.join("d.txt")).unwrap(), 6).unwrap();
    let want = PrngState::new(PrngDescriptor::mix64(4))
        .segments(6, 500)
        .unwrap();
    assert_eq!(got.symbols(), want.symbols());
}

#[test]
fn dice_empty_and_live() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(
        hybridrand(d, &["dice", "--q", "6", "--count", "0", "--out", "e.txt"])
            .status
            .success()
    );
    assert_eq!(fs::read(d.join("e.txt")).unwrap().len(), 0);
    let side = Sidecar::load(&d.join("e.txt.meta.json")).unwrap();
    assert_eq!(side.symbols.unwrap().count, 0);

    assert!(hybridrand(
        d,
        &["dice", "--q", "6", "--count", "600000", "--out", "l.txt"]
    )
    .status
    .success());
    let s = decode_symbols(&fs::read_to_string(d.join("l.txt")).unwrap(), 6).unwrap();
    assert_eq!(s.len(), 600_000);
    assert!(chi_square_uniformity(&s).unwrap().p() >= 1e-4);
}

#[test]
fn demo_defect_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = hybridrand(d, &["demo-defect", "--format", "json"]);
    assert!(o.status.success());
    let table: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3 * 4);
    let serial_p = |label: &str| {
        rows.iter()
            .find(|r| {
                r["generator"].as_str().unwrap().starts_with(label)
                    && r["result"]["test_name"] == "serial"
            })
            .unwrap()["result"]["p_value"]
            .as_f64()
            .unwrap()
    };
    assert!(serial_p("randu") < 1e-4);
    assert!(serial_p("hybrid") >= 1e-4);
    let again = hybridrand(d, &["demo-defect", "--format", "json"]);
    let t2: Value = serde_json::from_slice(&again.stdout).unwrap();
    assert_eq!(t2["rows"][0], rows[0]);
}

#[test]
fn demo_mc_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = hybridrand(d, &["demo-mc", "--format", "json"]);
    assert!(o.status.success());
    let table: Value = serde_json::from_slice(&o.stdout).unwrap();
    let lcg = table["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["label"].as_str().unwrap().starts_with("lcg(a=5"))
        .unwrap();
    assert!(lcg["z_score"].as_f64().unwrap() > 6.0);

    let cfg = write_config(
        d,
        "c.json",
        r#"{"generators":[{"prng":{"family":"mix64","seed":1}}]}"#,
    );
    assert_eq!(
        hybridrand(d, &["demo-mc", "--config", &cfg]).status.code(),
        Some(64)
    );

    let cfg = write_config(
        d,
        "two.json",
        r#"{"generators":[{"prng":{"family":"mix64","seed":1}},{"prng":{"family":"xorshift64","seed":1}}]}"#,
    );
    let a = hybridrand(
        d,
        &[
            "demo-mc", "--config", &cfg, "--count", "20000", "--task", "walk:10",
        ],
    );
    let b = hybridrand(
        d,
        &[
            "demo-mc", "--config", &cfg, "--count", "20000", "--task", "walk:10",
        ],
    );
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(hybridrand(d, &["frobnicate"]).status.code(), Some(64));
    assert_eq!(
        hybridrand(d, &["generate", "--bits", "8"]).status.code(),
        Some(64)
    );
    assert_eq!(
        hybridrand(
            d,
            &["generate", "--bits", "8", "--format", "csv", "--out", "x"]
        )
        .status
        .code(),
        Some(64)
    );
    assert_eq!(
        hybridrand(
            d,
            &["generate", "--bits", "8", "--mix-rate", "3/2", "--out", "x"]
        )
        .status
        .code(),
        Some(64)
    );
    assert!(hybridrand(d, &["--help"]).status.success());
}

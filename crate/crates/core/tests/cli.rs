use std::process::Command;

use boxrelax::cli::{emit_rows, run_cli, Format, COMPARISON_HEADER};
use boxrelax::montecarlo::ComparisonRow;
use boxrelax::theory::predict_pe;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_cli(
        std::iter::once("boxrelax").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_boxrelax");
    let ok = Command::new(bin)
        .args(["predict", "--delta", "1", "--snr-db", "0"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8(ok.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let pe: f64 = row[7].parse().unwrap();
    assert!((pe - 0.219).abs() < 5e-4, "{pe}");

    let bad = Command::new(bin)
        .args(["predict", "--delta", "0.4", "--snr-db", "10"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(bad.stdout.is_empty());
    assert!(String::from_utf8(bad.stderr)
        .unwrap()
        .contains("delta > 1/2"));

    let io = Command::new(bin)
        .args(["gap", "--out", "/nonexistent-dir/gap.csv"])
        .output()
        .unwrap();
    assert_eq!(io.status.code(), Some(3));
}

#[test]
fn thread_count_does_not_change_results() {
    let bin = env!("CARGO_BIN_EXE_boxrelax");
    let args = [
        "simulate", "--n", "64", "--trials", "6", "--delta", "0.8", "--snr-db", "3", "--seed", "9",
    ];
    let one = Command::new(bin)
        .args(args)
        .env("BOXRELAX_THREADS", "1")
        .output()
        .unwrap();
    let four = Command::new(bin)
        .args(args)
        .env("BOXRELAX_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn json_round_trip_is_bit_exact() {
    let mut rows: Vec<ComparisonRow> = [(0.7, 1.0), (1.0, 3.7), (2.0, 12.0)]
        .iter()
        .map(|&(d, s)| ComparisonRow::from_theory(&predict_pe(d, 10f64.powf(s / 10.0)).unwrap()))
        .collect();
    rows[1].ber_mean = Some(0.1 + 0.2);
    rows[1].z_score = Some(-1.0 / 3.0);
    rows[2].n = Some(512);

    let mut buf = Vec::new();
    emit_rows(&rows, Format::Json, &mut buf).unwrap();
    let parsed: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    let arr = parsed.as_array().unwrap();
    assert_eq!(arr.len(), 3);
    for (row, obj) in rows.iter().zip(arr) {
        let obj = obj.as_object().unwrap();
        assert_eq!(obj.keys().len(), COMPARISON_HEADER.len());
        let expect = [
            ("snr_db", row.snr_db),
            ("delta", row.delta),
            ("ber_mean", row.ber_mean),
            ("pe_theory", row.pe_theory),
            ("pe_high_snr", row.pe_high_snr),
            ("pe_mfb", row.pe_mfb),
            ("tau_star", row.tau_star),
            ("z_score", row.z_score),
        ];
        for (key, value) in expect {
            match value {
                Some(v) => assert_eq!(obj[key].as_f64().unwrap().to_bits(), v.to_bits(), "{key}"),
                None => assert!(obj[key].is_null(), "{key}"),
            }
        }
        assert_eq!(obj["n"].as_u64(), row.n.map(|v| v as u64));
    }
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let (code, out, _) = run(&["predict", "--delta", "0.55,3", "--snr-db", "-2:7:3"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1 + 8);
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        let (delta, snr_db): (f64, f64) = (f[1].parse().unwrap(), f[0].parse().unwrap());
        let p = predict_pe(delta, 10f64.powf(snr_db / 10.0)).unwrap();
        assert_eq!(f[7].parse::<f64>().unwrap().to_bits(), p.pe.to_bits());
        assert_eq!(
            f[10].parse::<f64>().unwrap().to_bits(),
            p.tau_star.to_bits()
        );
    }
}

#[test]
fn empty_rows_give_header_only() {
    let mut buf = Vec::new();
    emit_rows(&[], Format::Csv, &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "snr_db,delta,n,trials,ber_mean,ber_ci_lo,ber_ci_hi,pe_theory,pe_high_snr,pe_mfb,tau_star,z_score\n"
    );
}

#[test]
fn simulation_commands_fill_all_columns() {
    for cmd in ["simulate", "ao"] {
        let (code, out, _) = run(&[
            cmd, "--n", "64", "--trials", "5", "--delta", "1", "--snr-db", "2",
        ]);
        assert_eq!(code, 0, "{cmd}");
        let f: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(f[2], "64");
        assert_eq!(f[3], "5");
        assert!(f.iter().all(|v| !v.is_empty()), "{cmd}: {f:?}");
    }
    let (code, out, _) = run(&[
        "independence",
        "--n",
        "64",
        "--trials",
        "4",
        "--subsets",
        "100",
    ]);
    assert_eq!(code, 0);
    assert!(out.starts_with("k,delta,snr_db,n,trials,subsets,joint_error_freq"));
}

#[test]
fn small_sweep_is_sorted_and_complete() {
    let (code, out, _) = run(&[
        "sweep", "--n", "32", "--trials", "3", "--delta", "1.0,0.7", "--snr-db", "4,0",
    ]);
    assert_eq!(code, 0);
    let keys: Vec<(String, String)> = out
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[0].to_string())
        })
        .collect();
    let d07 = format!("{:.16e}", 0.7);
    let d10 = format!("{:.16e}", 1.0);
    let s0 = format!("{:.16e}", 0.0);
    let s4 = format!("{:.16e}", 4.0);
    assert_eq!(
        keys,
        vec![
            (d07.clone(), s0.clone()),
            (d07, s4.clone()),
            (d10.clone(), s0),
            (d10, s4)
        ]
    );
}

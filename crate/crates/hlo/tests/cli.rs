use clap::Parser;
use jsonschema::{Draft, JSONSchema};
use schwarzschild_hlo::characteristics::Classification;
use schwarzschild_hlo::cli::{run, Cli, CliError, RunOutput};
use schwarzschild_hlo::config::{preset_names, RunConfig, PRESETS};
use schwarzschild_hlo::Background;
use serde_json::Value;
use std::path::Path;
use std::process::Command;

const CONFIG_SCHEMA: &str = include_str!("../schemas/config.schema.json");
const SUMMARY_SCHEMA: &str = include_str!("../schemas/summary.schema.json");

fn schema(text: &str) -> JSONSchema {
    let v: Value = serde_json::from_str(text).unwrap();
    JSONSchema::options().with_draft(Draft::Draft7).compile(&v).unwrap()
}

fn assert_valid(schema_text: &str, doc: &Value) {
    let s = schema(schema_text);
    if let Err(errors) = s.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations: {msgs:?}");
    };
}

fn invoke(args: &[&str], out: &Path) -> Result<RunOutput, CliError> {
    let mut argv = vec!["hlo-lab"];
    argv.extend_from_slice(args);
    let out = out.to_str().unwrap().to_string();
    argv.extend_from_slice(&["--out", &out]);
    run(&Cli::try_parse_from(argv).unwrap())
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn is_17_digit(cell: &str) -> bool {
    let (mantissa, exp) = cell.split_once('e').unwrap_or(("", ""));
    let digits = mantissa.trim_start_matches('-');
    digits.len() == 18 && digits.as_bytes()[1] == b'.' && exp.trim_start_matches('-').parse::<u32>().is_ok()
}

fn write_config(dir: &Path, cfg: &Value) -> String {
    let path = dir.join("config-in.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn preset_value(name: &str) -> Value {
    serde_json::from_str(PRESETS.iter().find(|p| p.0 == name).unwrap().1).unwrap()
}

#[test]
fn presets_match_config_schema() {
    for (name, text) in PRESETS {
        let v: Value = serde_json::from_str(text).unwrap();
        assert_valid(CONFIG_SCHEMA, &v);
        let resolved = serde_json::to_value(RunConfig::preset(name).unwrap()).unwrap();
        assert_valid(CONFIG_SCHEMA, &resolved);
    }
    assert_eq!(preset_names().len(), 7);
}

#[test]
fn flat_riemann_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let out = invoke(&["solve", "--preset", "flat-riemann", "--oracle"], tmp.path()).unwrap();
    assert_valid(SUMMARY_SCHEMA, &out.summary);
    let (header, rows) = read_csv(&out.dir.join("solution.csv"));
    assert_eq!(header, ["x", "u", "v", "U"]);
    for r in &rows {
        let (x, u, v) = (r[0], r[1], r[2]);
        // shock from x = 1 at speed (0.8 + 0.2)/2; boundary region x < 0.8 t
        let (eu, ev) = if x < 0.8 {
            (0.8, 1.0)
        } else if x < 1.5 {
            (0.8, 2.0)
        } else {
            (0.2, 3.0)
        };
        assert!((u - eu).abs() < 1e-12, "u({x}) = {u}");
        assert_eq!(v, ev, "v({x})");
    }
    let res = &out.summary["results"];
    assert_eq!(res["shocks"].as_array().unwrap().len(), 1);
    assert!((res["shocks"][0].as_f64().unwrap() - 1.5).abs() < 1e-12);
    assert!((res["bv_seminorm"].as_f64().unwrap() - 0.6).abs() < 1e-9);
    assert!(res["oracle"]["l1"].as_f64().unwrap() < 1e-2);
    assert!(res["oracle"]["conservation_defect"].as_f64().unwrap().abs() < 1e-12);
    let (fv_header, fv_rows) = read_csv(&out.dir.join("fv.csv"));
    assert_eq!(fv_header, ["x", "u"]);
    assert_eq!(fv_rows.len(), rows.len());
}

#[test]
fn schwarzschild_presets_keep_static_profiles() {
    let bg = Background::new(1.0, 4.0).unwrap();
    for (preset, c, sign) in [("schw-infall", 0.2, -1.0), ("schw-steady", 0.62, 1.0)] {
        let tmp = tempfile::tempdir().unwrap();
        let out = invoke(&["solve", "--preset", preset], tmp.path()).unwrap();
        assert_valid(SUMMARY_SCHEMA, &out.summary);
        let (header, rows) = read_csv(&out.dir.join("solution.csv"));
        assert_eq!(header, ["r", "u", "v", "U", "C"]);
        assert_eq!(rows.len(), 80);
        for r in &rows {
            assert!((r[1] - sign * bg.static_speed(c, r[0])).abs() < 1e-6, "{preset}: u({}) = {}", r[0], r[1]);
            assert!((r[4] - c).abs() < 1e-6, "{preset}: C({}) = {}", r[0], r[4]);
        }
        assert!(out.summary["results"]["shocks"].as_array().unwrap().is_empty());
    }
}

#[test]
fn characteristics_funnel_splits_at_escape_speed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = invoke(&["characteristics", "--preset", "characteristics"], tmp.path()).unwrap();
    assert_valid(SUMMARY_SCHEMA, &out.summary);
    let res = &out.summary["results"];
    assert_eq!(res["arc_count"], 19);
    let bg = Background::new(1.0, 3.0).unwrap();
    let ue = bg.escape_velocity(6.0).unwrap();
    for arc in res["arcs"].as_array().unwrap() {
        let u0 = arc["u0"].as_f64().unwrap();
        let c = bg.conserved_c(6.0, u0).unwrap();
        let expected = Classification::from_c(1.0, c, u0);
        assert_eq!(arc["classification"], expected.as_str());
        assert_eq!(arc["classification"] == "escaping", u0 >= ue, "u0 = {u0}");
    }
    let (header, rows) = read_csv(&out.dir.join("light_cone.csv"));
    assert_eq!(header, ["t", "r_out", "r_in"]);
    assert!(rows.iter().all(|r| r[1] >= 6.0 && r[2] <= 6.0 && r[2] >= 2.0));
    assert!(rows.windows(2).all(|w| w[1][1] > w[0][1] && w[1][2] <= w[0][2]));
    let text = std::fs::read_to_string(out.dir.join("arcs.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "arc,u0,t,r,u,c");
    let arcs: std::collections::BTreeSet<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(arcs.len(), 19);
}

#[test]
fn flat_funnel_is_straight() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = preset_value("characteristics");
    cfg["background"]["mass"] = 0.0.into();
    let path = write_config(tmp.path(), &cfg);
    let out = invoke(&["characteristics", "--config", &path], tmp.path()).unwrap();
    let text = std::fs::read_to_string(out.dir.join("arcs.csv")).unwrap();
    for line in text.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        let (u0, t, r, u) = (cells[0], cells[1], cells[2], cells[3]);
        assert!((r - (6.0 + u0 * t)).abs() < 1e-9 || r <= 1e-6, "r({t}) = {r} for u0 = {u0}");
        assert_eq!(u, u0);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for cmd in [["solve", "flat-riemann"], ["ergodic", "flat-iid"], ["attract", "flat-iid"]] {
        let oa = invoke(&[cmd[0], "--preset", cmd[1]], a.path()).unwrap();
        let ob = invoke(&[cmd[0], "--preset", cmd[1]], b.path()).unwrap();
        assert_eq!(oa.dir.file_name(), ob.dir.file_name());
        for f in oa.summary["files"].as_array().unwrap() {
            let f = f.as_str().unwrap();
            let (x, y) = (std::fs::read(oa.dir.join(f)).unwrap(), std::fs::read(ob.dir.join(f)).unwrap());
            assert!(x == y, "{} differs between reruns", f);
        }
    }
}

#[test]
fn csv_floats_carry_17_significant_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = invoke(&["solve", "--preset", "flat-riemann"], tmp.path()).unwrap();
    for f in ["solution.csv", "trace.csv"] {
        let text = std::fs::read_to_string(out.dir.join(f)).unwrap();
        for line in text.lines().skip(1) {
            assert!(line.split(',').all(is_17_digit), "{f}: {line}");
        }
    }
}

#[test]
fn seed_override_changes_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let a = invoke(&["ergodic", "--preset", "flat-iid"], tmp.path()).unwrap();
    let b = invoke(&["ergodic", "--preset", "flat-iid", "--seed", "8"], tmp.path()).unwrap();
    assert_ne!(a.dir, b.dir);
    assert_eq!(b.summary["seed"], 8);
    assert_ne!(a.summary["results"]["rho_hat"], b.summary["results"]["rho_hat"]);
    let written: Value = serde_json::from_str(&std::fs::read_to_string(b.dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["seed"], 8);
}

#[test]
fn ergodic_presets_report_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let flat = invoke(&["ergodic", "--preset", "flat-constant-q"], tmp.path()).unwrap();
    assert_valid(SUMMARY_SCHEMA, &flat.summary);
    let r = &flat.summary["results"];
    assert!((r["rho_hat"].as_f64().unwrap() + 0.125).abs() <= 5e-3);
    assert!((r["theta_hat"].as_f64().unwrap() - 0.5).abs() <= 5e-3);
    let (header, rows) = read_csv(&flat.dir.join("rho.csv"));
    assert_eq!(header, ["span", "s_over_span"]);
    assert_eq!(rows.len(), 3);

    let schw = invoke(&["ergodic", "--preset", "schw-corollary3"], tmp.path()).unwrap();
    assert_valid(SUMMARY_SCHEMA, &schw.summary);
    let r = &schw.summary["results"];
    assert!(r["rho_hat"].as_f64().unwrap() <= -0.29);
    assert_eq!(r["bound"]["credit_exceeds_escape"], true);
    assert_eq!(r["global_solution_expected"], true);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(schw.dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["asymptotic_records"].as_array().unwrap().len(), 3);
}

#[test]
fn flat_attraction_and_coincidence() {
    let tmp = tempfile::tempdir().unwrap();
    let out = invoke(&["attract", "--preset", "flat-iid"], tmp.path()).unwrap();
    assert_valid(SUMMARY_SCHEMA, &out.summary);
    let r = &out.summary["results"];
    let radii: Vec<f64> = r["records"].as_array().unwrap().iter().map(|x| x["agreement_radius"].as_f64().unwrap()).collect();
    assert!(radii.windows(2).all(|w| w[1] >= w[0]), "{radii:?}");
    assert_eq!(r["coincidence"]["coincide"], true);
    let (header, _) = read_csv(&out.dir.join("attraction.csv"));
    assert_eq!(header, ["lookback", "d", "agreement_radius"]);
}

#[test]
fn oracle_diff_reports_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = invoke(&["oracle-diff", "--preset", "flat-riemann"], tmp.path()).unwrap();
    assert_valid(SUMMARY_SCHEMA, &out.summary);
    let (header, rows) = read_csv(&out.dir.join("diff.csv"));
    assert_eq!(header, ["x", "u_hlo", "u_fv", "abs_diff"]);
    let l1: f64 = rows.iter().map(|r| r[3]).sum::<f64>() * 0.01;
    assert!((l1 - out.summary["results"]["l1"].as_f64().unwrap()).abs() < 1e-9);
}

fn exit_code(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_hlo-lab")).args(args).arg("--out").arg(out).output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _) = exit_code(&["solve", "--preset", "flat-riemann"], tmp.path());
    assert_eq!(code, 0);

    let mut cfg = preset_value("schw-steady");
    cfg["background"]["r_star"] = 2.0.into();
    let path = write_config(tmp.path(), &cfg);
    let (code, err) = exit_code(&["solve", "--config", &path], tmp.path());
    assert_eq!(code, 2);
    assert!(err.contains("background") && err.contains("horizon"), "{err}");

    let path = tmp.path().join("broken.json");
    std::fs::write(&path, "{\n  \"name\": \"x\",\n  \"seed\": -1\n}").unwrap();
    let (code, err) = exit_code(&["solve", "--config", path.to_str().unwrap()], tmp.path());
    assert_eq!(code, 2);
    assert!(err.contains("line 3"), "{err}");

    for args in [
        vec!["solve", "--preset", "nope"],
        vec!["solve", "--preset", "flat-constant-q"],
        vec!["ergodic", "--preset", "flat-riemann"],
        vec!["ergodic", "--preset", "flat-constant-q", "--oracle"],
        vec!["solve", "--preset", "flat-riemann", "--config", "x.json"],
        vec!["solve"],
        vec!["explode"],
    ] {
        assert_eq!(exit_code(&args, tmp.path()).0, 2, "{args:?}");
    }

    // no boundary credit: the global solution never exists
    let mut cfg = preset_value("flat-constant-q");
    cfg["forcing"]["process"]["levels"] = serde_json::json!([-0.3]);
    let path = write_config(tmp.path(), &cfg);
    let (code, err) = exit_code(&["ergodic", "--config", &path], tmp.path());
    assert_eq!(code, 3, "{err}");
}

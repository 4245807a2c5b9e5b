//! Runs a shipped preset through the command-line driver and prints the JSON
//! summary. Usage: cargo run --example run_preset -- [preset] [command]

use schwarzschild_hlo::cli::main_with_args;
use schwarzschild_hlo::config::preset_names;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let preset = args.get(1).map(String::as_str).unwrap_or("flat-riemann");
    let command = args.get(2).map(String::as_str).unwrap_or("solve");
    println!("presets: {}", preset_names().join(", "));
    let out = std::env::temp_dir().join("hlo-lab-example");
    let code = main_with_args(["hlo-lab", command, "--preset", preset, "--out", out.to_str().unwrap()]);
    if code == 0 {
        for entry in std::fs::read_dir(&out).unwrap().flatten() {
            let summary = entry.path().join("summary.json");
            if entry.file_name().to_string_lossy().starts_with(command) && summary.exists() {
                println!("{}", std::fs::read_to_string(summary).unwrap());
            }
        }
    }
    std::process::exit(code);
}

fn main() {
    std::process::exit(schwarzschild_hlo::cli::main_with_args(std::env::args_os()));
}

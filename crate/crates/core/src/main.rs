fn main() {
    std::process::exit(dirac_core::cli::run_command(std::env::args_os()));
}

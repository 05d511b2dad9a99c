fn main() {
    std::process::exit(hybridoem::cli::run_command(std::env::args_os()));
}

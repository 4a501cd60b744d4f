fn main() {
    std::process::exit(frontflow_cli::run(std::env::args_os()));
}

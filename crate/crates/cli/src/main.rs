fn main() {
    std::process::exit(soficity_cli::run(std::env::args_os()));
}

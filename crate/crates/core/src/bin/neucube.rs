fn main() {
    std::process::exit(neucube::cli::run_cli(std::env::args_os()));
}

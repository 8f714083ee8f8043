fn main() {
    std::process::exit(capanneal_cli::run_cli(std::env::args_os()));
}

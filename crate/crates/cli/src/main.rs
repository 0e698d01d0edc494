fn main() {
    std::process::exit(trimix_cli::run(std::env::args_os()));
}

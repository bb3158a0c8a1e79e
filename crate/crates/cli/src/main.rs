fn main() {
    std::process::exit(sigwatch_cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(ltbarrier_cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(qad::cli::run(std::env::args_os().collect()));
}

fn main() {
    std::process::exit(hybrid_fpk::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(sketchsolve::cli::run(std::env::args_os()));
}

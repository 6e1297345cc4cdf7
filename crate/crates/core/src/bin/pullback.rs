fn main() {
    std::process::exit(pullback::cli::run());
}

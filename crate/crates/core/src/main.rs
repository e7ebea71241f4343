fn main() {
    std::process::exit(ckge::cli::run());
}

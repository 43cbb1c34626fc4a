fn main() {
    std::process::exit(jetvar::cli::run());
}

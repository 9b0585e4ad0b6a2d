fn main() {
    std::process::exit(lrcov::cli::run());
}

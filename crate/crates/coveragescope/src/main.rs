fn main() {
    std::process::exit(coveragescope::cli::run());
}

fn main() {
    std::process::exit(despeckle::cli::run_from_env());
}

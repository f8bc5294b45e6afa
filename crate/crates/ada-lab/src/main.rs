fn main() {
    std::process::exit(ada_lab::cli::run_from_env());
}

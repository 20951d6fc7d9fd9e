fn main() {
    std::process::exit(warpflow::cli::run_from_args(std::env::args_os()));
}

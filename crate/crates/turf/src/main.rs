fn main() {
    std::process::exit(turf::cli::run(std::env::args_os()));
}

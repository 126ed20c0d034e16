fn main() {
    std::process::exit(residkit::cli::run(std::env::args_os()));
}

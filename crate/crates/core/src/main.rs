fn main() {
    std::process::exit(gwalign::cli::run(std::env::args_os()));
}

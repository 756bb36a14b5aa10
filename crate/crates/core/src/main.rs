fn main() {
    std::process::exit(aeromap::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(spheregap::cli::run(std::env::args_os()));
}

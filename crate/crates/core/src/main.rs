fn main() {
    std::process::exit(gammanet::cli::run(std::env::args_os()));
}

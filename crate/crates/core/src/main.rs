fn main() {
    std::process::exit(regionembed::cli::run(std::env::args_os()));
}

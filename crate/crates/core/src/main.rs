fn main() {
    std::process::exit(lifi_po::cli::run(std::env::args_os()));
}

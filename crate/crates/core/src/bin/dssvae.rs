fn main() {
    std::process::exit(dssvae::cli::run(std::env::args_os()));
}

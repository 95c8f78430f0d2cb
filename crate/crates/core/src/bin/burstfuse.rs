fn main() {
    std::process::exit(burstfuse::cli::run(std::env::args_os()));
}

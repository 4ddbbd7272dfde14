fn main() {
    std::process::exit(oxnoise::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(lmd::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(wmf4d::cli::run(std::env::args_os()));
}

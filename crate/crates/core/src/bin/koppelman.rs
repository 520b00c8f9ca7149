fn main() {
    std::process::exit(koppelman::cli::run(std::env::args_os()));
}

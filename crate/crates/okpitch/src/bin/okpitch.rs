fn main() {
    std::process::exit(okpitch::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(rfsurrogate_cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(unitrack::cli::run(std::env::args_os()));
}

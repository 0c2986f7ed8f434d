fn main() {
    std::process::exit(emberforge::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(katoklab::cli::run(std::env::args_os()));
}

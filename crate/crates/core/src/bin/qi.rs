fn main() {
    std::process::exit(qillum::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(hgoe::cli::run(std::env::args_os()));
}

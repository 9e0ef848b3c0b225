fn main() {
    std::process::exit(fill_cli::run(std::env::args_os()));
}

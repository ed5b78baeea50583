fn main() {
    std::process::exit(ssmix_cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(pdwatch_cli::run(std::env::args_os()));
}

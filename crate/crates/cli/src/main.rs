fn main() {
    std::process::exit(qaft_cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(edgevid_cli::run(std::env::args_os()));
}

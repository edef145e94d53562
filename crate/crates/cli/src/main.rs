fn main() {
    std::process::exit(plainpose_cli::run(std::env::args_os()));
}

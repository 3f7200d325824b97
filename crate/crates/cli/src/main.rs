fn main() {
    std::process::exit(auditmatch_cli::main_with(std::env::args_os()));
}

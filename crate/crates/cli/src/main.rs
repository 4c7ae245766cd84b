fn main() {
    std::process::exit(sna_cli::main_with_args(std::env::args_os()));
}

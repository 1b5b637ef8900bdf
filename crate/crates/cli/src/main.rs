fn main() {
    std::process::exit(chebmap::cli::main_with_args(std::env::args_os()));
}

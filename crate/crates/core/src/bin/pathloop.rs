fn main() {
    std::process::exit(pathloop::cli::main_with_args(std::env::args_os()));
}

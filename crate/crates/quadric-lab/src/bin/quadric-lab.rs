fn main() {
    std::process::exit(quadric_lab::cli::main_with_args(std::env::args_os()));
}

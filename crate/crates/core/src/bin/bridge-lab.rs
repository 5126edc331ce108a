fn main() {
    std::process::exit(bridge_lab::cli::main_with_args(std::env::args_os()));
}

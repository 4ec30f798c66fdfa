fn main() {
    std::process::exit(kafnet::cli::main_with_args(std::env::args_os()));
}

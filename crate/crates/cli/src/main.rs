fn main() {
    std::process::exit(facedyn_cli::main_with_args(std::env::args_os()));
}

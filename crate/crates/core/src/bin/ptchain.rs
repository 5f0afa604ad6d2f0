fn main() {
    std::process::exit(ptchain::cli::main_with_args(std::env::args_os()));
}

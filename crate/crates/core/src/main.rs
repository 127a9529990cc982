fn main() {
    std::process::exit(navwatch::cli::main_with_args(std::env::args_os()));
}

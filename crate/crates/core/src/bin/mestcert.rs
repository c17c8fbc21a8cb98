fn main() {
    std::process::exit(mestcert::cli::main_with_args(std::env::args_os()));
}

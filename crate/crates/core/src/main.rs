fn main() {
    std::process::exit(tubewalk::cli::main_with_args(std::env::args_os()));
}

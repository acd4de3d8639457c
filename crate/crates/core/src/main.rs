fn main() {
    std::process::exit(vprefine::cli::main_with(std::env::args_os()));
}

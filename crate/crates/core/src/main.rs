fn main() {
    std::process::exit(qkinetic::cli::main_with_args(std::env::args_os()));
}

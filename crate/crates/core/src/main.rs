fn main() {
    std::process::exit(tbip::cli::main_with_args(std::env::args_os()));
}

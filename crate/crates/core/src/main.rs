fn main() {
    std::process::exit(morison_greybox::cli::main_with_args(std::env::args_os()));
}

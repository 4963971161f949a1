fn main() {
    std::process::exit(iic_cli::main_with_args(std::env::args_os()));
}

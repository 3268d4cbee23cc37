fn main() {
    std::process::exit(shearlab_cli::main_with(std::env::args_os()));
}

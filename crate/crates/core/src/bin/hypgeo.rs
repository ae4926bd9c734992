fn main() {
    std::process::exit(hypgeo::cli_io::main_with_args(std::env::args_os()));
}

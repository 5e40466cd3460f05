fn main() {
    std::process::exit(gravtile::cli::main_with_args(std::env::args_os()));
}

fn main() {
    std::process::exit(genkernel::cli::main_with(std::env::args_os()));
}

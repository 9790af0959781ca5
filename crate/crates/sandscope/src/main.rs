fn main() {
    std::process::exit(sandscope::cli::main_with(std::env::args_os()));
}

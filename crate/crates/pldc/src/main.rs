fn main() {
    std::process::exit(pldc::cli::main_entry(std::env::args_os()));
}

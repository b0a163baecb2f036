fn main() {
    std::process::exit(inferbench::cli::main());
}

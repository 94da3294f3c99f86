fn main() {
    std::process::exit(twise::cli::main());
}

fn main() {
    std::process::exit(dinidiff::cli::main());
}

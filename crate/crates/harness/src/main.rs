fn main() {
    std::process::exit(readcomp::cli::main());
}

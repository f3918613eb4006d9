fn main() {
    efm::cli::main();
}

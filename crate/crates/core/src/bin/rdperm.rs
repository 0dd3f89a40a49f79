fn main() {
    rdperm::cli::main()
}

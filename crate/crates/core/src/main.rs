fn main() {
    std::process::exit(fdident::cli::main());
}

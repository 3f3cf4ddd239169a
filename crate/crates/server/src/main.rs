fn main() {
    std::process::exit(georegion_server::cli::main());
}

fn main() {
    std::process::exit(huts::cli::main_entry());
}

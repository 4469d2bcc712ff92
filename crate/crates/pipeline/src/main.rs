fn main() {
    std::process::exit(ctphish::cli::main_entry());
}

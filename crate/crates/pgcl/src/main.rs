fn main() {
    std::process::exit(pgcl::cli::main_entry());
}

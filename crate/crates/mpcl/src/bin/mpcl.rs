fn main() {
    std::process::exit(mpcl::cli::main_entry());
}

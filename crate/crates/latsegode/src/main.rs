fn main() { latsegode::cli::main_entry(); }

fn main() {
    std::process::exit(scorescope::cli::main());
}

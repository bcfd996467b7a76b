fn main() {
    std::process::exit(glance_core::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(ris_pass::harness::cli::run(std::env::args_os()));
}

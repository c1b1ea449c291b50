fn main() {
    std::process::exit(emrec::cli::run(std::env::args_os()));
}

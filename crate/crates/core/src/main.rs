fn main() {
    std::process::exit(fgclep::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(bksihr::cli::run(std::env::args_os()));
}

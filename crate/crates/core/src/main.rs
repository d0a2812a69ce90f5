fn main() {
    std::process::exit(d2dspread::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(eegauth::cli::run_from(std::env::args_os()));
}

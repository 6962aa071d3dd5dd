fn main() {
    std::process::exit(sitcomm_lab::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(rilt::cli::dispatch(std::env::args_os()));
}

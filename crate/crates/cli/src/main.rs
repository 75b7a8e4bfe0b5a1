fn main() {
    std::process::exit(ovo_cli::dispatch(std::env::args_os()));
}

fn main() {
    std::process::exit(actprobe::cli::dispatch(std::env::args_os()));
}

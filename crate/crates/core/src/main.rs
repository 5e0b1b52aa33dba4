fn main() {
    std::process::exit(distcd::cli::cli_main(std::env::args_os()));
}

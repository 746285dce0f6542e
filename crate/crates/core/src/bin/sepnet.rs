fn main() {
    std::process::exit(sepnet::experiments::cli_main(std::env::args_os()));
}

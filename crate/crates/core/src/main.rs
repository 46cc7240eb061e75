fn main() {
    std::process::exit(latmod::cli::cmd_dispatch(std::env::args_os()));
}

fn main() {
    std::process::exit(treepde_cli::run(std::env::args_os()));
}

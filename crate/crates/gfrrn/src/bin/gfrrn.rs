fn main() {
    std::process::exit(gfrrn::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(mscn::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(ampsize::cli::run(std::env::args_os()));
}

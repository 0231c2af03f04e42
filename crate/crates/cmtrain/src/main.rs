fn main() {
    std::process::exit(cmtrain::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(quasimargin::cli::run(std::env::args_os()));
}

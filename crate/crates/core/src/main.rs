fn main() {
    std::process::exit(dura_kge::cli::run(std::env::args_os()));
}

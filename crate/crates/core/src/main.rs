fn main() {
    std::process::exit(renorm_perc::cli::run(std::env::args_os()));
}

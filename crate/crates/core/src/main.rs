fn main() {
    std::process::exit(bernoulli_factory::cli::run(std::env::args_os()));
}

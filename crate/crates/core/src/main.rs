fn main() {
    std::process::exit(lattice_mcmc::cli::run(std::env::args_os()));
}

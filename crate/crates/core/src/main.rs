use curved_rnbp::cli;

fn main() {
    std::process::exit(cli::run());
}

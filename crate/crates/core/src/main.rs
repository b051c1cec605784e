fn main() {
    let code = zero_bias::harness::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}

fn main() {
    let code = ava_cli::dispatch(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}

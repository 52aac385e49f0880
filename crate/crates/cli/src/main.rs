fn main() {
    let code = permctl_cli::run(std::env::args_os());
    std::process::exit(code);
}

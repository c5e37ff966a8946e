use std::io;

fn main() {
    env_logger::init();
    let code = filpost::cli::dispatch(
        std::env::args_os(),
        &mut io::stdin().lock(),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    std::process::exit(code);
}

use clap::Parser;
use debiaser_cli::{run, Cli, Exit};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { Exit::Usage.code() } else { Exit::Ok.code() });
        }
    };
    let code = match run(cli) {
        Ok(exit) => exit.code(),
        Err(f) => {
            eprintln!("error: {f}");
            f.exit.code()
        }
    };
    std::process::exit(code);
}

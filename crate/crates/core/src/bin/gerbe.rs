use clap::Parser;
use gerbe_core::cli::{emit, run, RunConfig, EXIT_INVALID};

fn main() {
    // usage errors are validation failures; clap's own code 2 means a numeric defect here
    let cfg = match RunConfig::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let out = run(&cfg);
    match emit(&cfg, &out) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("gerbe: cannot write report: {e}");
            std::process::exit(EXIT_INVALID);
        }
    }
}

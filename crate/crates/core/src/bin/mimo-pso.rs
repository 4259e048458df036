use std::process::ExitCode;

use mimo_pso::harness::{parse_spec, run, HarnessError};

fn main() -> ExitCode {
    let result = parse_spec(std::env::args_os()).and_then(|spec| run(&spec));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(HarnessError::Info(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = barom::Cli::parse();
    match barom::run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("barom: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

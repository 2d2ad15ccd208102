//! Loads a daemon configuration file and prints the effective settings.
//!
//! ```text
//! cargo run --example config_file -- codeval.ini
//! ```

use codeval::daemon::{load_config, parse_config, ConfigOverrides};

const SAMPLE: &str = "[SERVER]
url=https://canvas.example.edu
token=XXXX

[RUN]
precommand=
command=docker run -i -v SUBMISSIONS:/submissions img bash -c \"cd /submissions; EVALUATE\"
";

fn main() {
    let overrides = ConfigOverrides::from_env();
    let config = match std::env::args().nth(1) {
        Some(path) => load_config(path.as_ref(), &overrides),
        None => parse_config(SAMPLE, &overrides),
    };
    match config {
        Ok(config) => {
            println!("server: {}", config.server.base_url);
            println!("isolated: {}", !config.isolation.direct_mode);
            println!("every {} s, {} at a time", config.poll_interval_s, config.parallelism);
            println!("\n{}", config.to_ini());
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    }
}

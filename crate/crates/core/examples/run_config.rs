//! Drives the command-line front end on a configuration file.
//!
//! cargo run --release --example run_config -- examples/configs/linear_orbit.json /tmp/linear

fn main() {
    let mut args = std::env::args().skip(1);
    let config = args.next().unwrap_or_else(|| "examples/configs/linear_orbit.json".into());
    let out = args.next().unwrap_or_else(|| std::env::temp_dir().join("powerlaw-run").display().to_string());
    let code = powerlaw_periodic::cli::run(["powerlaw-periodic", "solve-periodic", "--config", &config, "--out", &out]);
    println!("solve-periodic exited with {code}");
    let code = powerlaw_periodic::cli::run(["powerlaw-periodic", "verify", "--out", &out]);
    println!("verify exited with {code}");
}

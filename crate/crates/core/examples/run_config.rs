//! Drives a pipeline through the same configuration layer as the binary.

use stability_lab::experiment::{execute, RunConfig};

fn main() -> stability_lab::Result<()> {
    let mut config = RunConfig::from_text(
        "experiment = sweep-rounds\n\
         rounds = 3, 5, 7\n\
         shots = 5000\n\
         decoder = clustering\n",
    )?;
    config.set("seed", "9")?;
    println!("config hash {}", config.hash());
    let out = execute(&config)?;
    print!("{}", out.table);
    print!(
        "{}",
        String::from_utf8_lossy(out.file("results.csv").unwrap_or_default())
    );
    Ok(())
}

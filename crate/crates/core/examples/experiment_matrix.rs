//! A small grid from TOML text, run on two workers, with the summary printed.

use std::path::Path;

use hybridacc::experiment::{parse_config_str, run_cells, summarize};
use hybridacc::report::write_summary;

const CONFIG: &str = r#"
[scenario]
A = [6, 12]
T = [10, 30]
brake_rates = [12]

[sim]
controllers = ["mpc", "hybrid"]
"#;

fn main() -> hybridacc::Result<()> {
    let manifest = parse_config_str(CONFIG, Path::new("inline.toml"))?;
    println!("{} cells", manifest.cell_count());
    let results = run_cells(&manifest, Some(2))?;
    write_summary(std::io::stdout().lock(), &summarize(&results)?)?;
    Ok(())
}

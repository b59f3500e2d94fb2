use qillum::experiments::{run_sweep, summarize, SweepConfig};

fn main() -> qillum::Result<()> {
    let cfg = SweepConfig::from_toml_str(
        r#"
name = "example"

[source]
kinds = ["tmsv", "classical", "coherent"]
purity = { kind = "heating", residual = 0.02, crossing = 4.5 }

[sweep]
variable = "n_s"
grid = [0.1, 0.5, 2.0, 8.0]
records = 20000
coherent_records = 20000
repetitions = 2
seed = 3
"#,
    )?;
    let result = run_sweep(&cfg)?;
    result.write_csv(std::io::stdout())?;
    println!("{}", summarize(cfg.name(), &result).to_json()?);
    Ok(())
}

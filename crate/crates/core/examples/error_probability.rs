use qillum::constants::db_to_linear;
use qillum::receivers::error_probability;

fn main() -> qillum::Result<()> {
    for snr_db in [-30.0, -20.0, -10.0, 0.0] {
        let snr = db_to_linear(snr_db);
        let row: Vec<String> = [1.0, 100.0, 10_000.0]
            .iter()
            .map(|&m| error_probability(snr, m).map(|p| format!("{p:.3e}")))
            .collect::<qillum::Result<_>>()?;
        println!("SNR {snr_db:>6} dB: P_err at M = 1, 100, 10000: {}", row.join("  "));
    }
    Ok(())
}

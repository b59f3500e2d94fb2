use qillum::constants::{db_to_linear, moments_from_tmsv, BandParams};
use qillum::dsp::{demodulate_records, estimate_moments, sample_records, synthesize_if, ChannelScale, RawRecordStream};

fn main() -> qillum::Result<()> {
    let band = BandParams::reference();
    let gain = db_to_linear(40.0);
    let scales = [
        ChannelScale { omega: band.omega_s, gain },
        ChannelScale { omega: band.omega_i, gain },
    ];
    let batch = sample_records(&moments_from_tmsv(1.0, 1.0)?, 2_000, 11)?;
    let raw = synthesize_if(&batch, &band, scales)?;
    let mut bytes = Vec::new();
    raw.write_to(&mut bytes)?;
    let back = RawRecordStream::read_from(bytes.as_slice())?;
    let records = demodulate_records(&back, scales)?;
    let worst = batch
        .amps
        .iter()
        .zip(&records.amps)
        .flat_map(|(a, b)| [(a[0] - b[0]).norm(), (a[1] - b[1]).norm()])
        .fold(0.0, f64::max);
    println!("{} records, {} bytes on disk, worst amplitude error {worst:.2e}", records.len(), bytes.len());
    let est = estimate_moments(&records)?;
    println!("recovered n_s {:.3} n_i {:.3} |c| {:.3}", est.moments.n_s, est.moments.n_i, est.moments.c.norm());
    Ok(())
}

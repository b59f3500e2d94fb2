use qillum::calibration::{calibrate_idler_number, fit_gain_noise, synthetic_points};
use qillum::constants::{db_to_linear, BandParams};

fn main() -> qillum::Result<()> {
    let band = BandParams::reference();
    let gain = db_to_linear(94.25);
    let mut points = synthetic_points(&[0.02, 0.05, 0.1, 0.2, 0.4, 0.8], gain, 14.91, &band, band.omega_i)?;
    for (k, pt) in points.iter_mut().enumerate() {
        let wobble = if k % 2 == 0 { 1.002 } else { 0.998 };
        pt.noise_density *= wobble;
        pt.stderr = 0.002 * pt.noise_density;
    }
    let fit = fit_gain_noise(&points, &band, band.omega_i)?;
    println!("{}", fit.to_json()?);
    let n = calibrate_idler_number(fit.gain.value * (0.5 + fit.n_add.value + 1.0), fit.gain.value, fit.n_add.value);
    println!("idler occupation recovered from a detected power: {:.4}", n.value);
    Ok(())
}

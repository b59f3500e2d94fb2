use qillum::constants::moments_from_tmsv;
use qillum::dsp::{estimate_moments, sample_records};

fn main() -> qillum::Result<()> {
    let truth = moments_from_tmsv(0.5, 0.9)?;
    for count in [1_000, 10_000, 100_000] {
        let batch = sample_records(&truth, count, 7)?;
        let est = estimate_moments(&batch)?;
        println!(
            "M {count:>7}: n_s {:.4} ± {:.4}  n_i {:.4} ± {:.4}  Re c {:.4} ± {:.4}  (true {:.4}, {:.4}, {:.4})",
            est.moments.n_s,
            est.se_n_s,
            est.moments.n_i,
            est.se_n_i,
            est.moments.c.re,
            est.se_c.re,
            truth.n_s,
            truth.n_i,
            truth.c.re
        );
    }
    Ok(())
}

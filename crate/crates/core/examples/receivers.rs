use qillum::chain::{ChainParams, Hypothesis, TargetScenario};
use qillum::constants::{moments_coherent, moments_from_tmsv};
use qillum::dsp::{sample_records_with, SampleSpec};
use qillum::receivers::{
    heterodyne_snr, heterodyne_snr_analytic, homodyne_snr, homodyne_snr_analytic, pc_raw_snr, pc_snr_analytic,
};

fn batch(
    m: &qillum::constants::SecondMoments,
    p: &ChainParams,
    t: &TargetScenario,
    seed: u64,
) -> qillum::Result<qillum::dsp::RecordBatch> {
    let detected = qillum::chain::detect_pair(m, p, t)?.moments;
    let spec = SampleSpec {
        vacuum: p.record_vacuum(),
        hypothesis: Some(t.hypothesis),
        ..SampleSpec::default()
    };
    sample_records_with(&detected, 200_000, seed, spec)
}

fn main() -> qillum::Result<()> {
    let p = ChainParams::reference();
    let eta = 1.0;
    let present = TargetScenario::new(eta, Hypothesis::Present)?;
    let absent = TargetScenario::absent();
    let tmsv = moments_from_tmsv(0.5, 1.0)?;
    let mc = pc_raw_snr(&batch(&tmsv, &p, &absent, 1)?, &batch(&tmsv, &p, &present, 2)?)?;
    let cf = pc_snr_analytic(&tmsv, &p, eta, false)?;
    println!("pc_raw      MC {:.3e} ± {:.1e}  closed form {:.3e}", mc.snr, mc.stderr, cf.snr);

    let coh = moments_coherent(0.5)?;
    let b0 = batch(&coh, &p, &absent, 3)?;
    let b1 = batch(&coh, &p, &present, 4)?;
    let hom = homodyne_snr(&b0, &b1, 0.0)?;
    let het = heterodyne_snr(&b0, &b1)?;
    println!("homodyne    MC {:.3e} ± {:.1e}  closed form {:.3e}", hom.snr, hom.stderr, homodyne_snr_analytic(0.5, &p, eta)?.snr);
    println!("heterodyne  MC {:.3e} ± {:.1e}  closed form {:.3e}", het.snr, het.stderr, heterodyne_snr_analytic(0.5, &p, eta)?.snr);
    Ok(())
}

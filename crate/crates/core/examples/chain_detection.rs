use qillum::chain::{detect_pair, noise_totals, passive_snr, ChainParams, TargetScenario};
use qillum::constants::{linear_to_db, moments_from_tmsv};

fn main() -> qillum::Result<()> {
    let p = ChainParams::reference();
    println!("total signal gain {:.2} dB, added noise {:.3}", linear_to_db(p.total_gain_s()), p.n_add_s());
    let m = moments_from_tmsv(0.5, 1.0)?;
    for eta in [1.0, 0.1, 0.01] {
        let totals = noise_totals(&p, eta)?;
        let absent = detect_pair(&m, &p, &TargetScenario::absent())?;
        let present = detect_pair(&m, &p, &TargetScenario::present(eta)?)?;
        println!(
            "eta {eta:<5} n0 {:.4e} n1 {:.4e} |c| {:.4e} -> {:.4e} passive {:.2} dB",
            totals.n0,
            totals.n1,
            absent.moments.c.norm(),
            present.moments.c.norm(),
            linear_to_db(passive_snr(&p, eta)?)
        );
    }
    Ok(())
}

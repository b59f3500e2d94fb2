use qillum::constants::{duan_delta, moments_classical, moments_coherent, moments_from_tmsv};

fn main() -> qillum::Result<()> {
    println!("{:>6} {:>8} {:>10} {:>10} {:>9}", "n_s", "purity", "delta", "nu_min", "physical");
    for n_s in [0.1, 1.0, 5.0] {
        for purity in [1.0, 0.9, 0.5] {
            let m = moments_from_tmsv(n_s, purity)?;
            let (nu, _) = m.symplectic_eigenvalues();
            println!("{n_s:>6} {purity:>8} {:>10.4} {nu:>10.4} {:>9}", duan_delta(&m), m.is_physical());
        }
    }
    let classical = moments_classical(1.0, 1.0)?;
    let coherent = moments_coherent(1.0)?;
    println!("classical delta {:.4}, coherent delta {:.4}", duan_delta(&classical), duan_delta(&coherent));
    Ok(())
}

use qillum::experiments::{distance_to_eta_db, DistanceModel, DistancePoint, PurityModel};

fn main() -> qillum::Result<()> {
    let heating = PurityModel::Heating {
        residual: 0.02,
        slope: None,
        crossing: Some(4.5),
    }
    .resolve()?;
    for n_s in [0.1, 1.0, 4.5, 10.0] {
        let m = heating.moments(n_s)?;
        println!("n_s {n_s:>5}: purity {:.4} delta {:.4}", heating.purity(n_s)?, qillum::constants::duan_delta(&m));
    }
    let table = DistanceModel::Table {
        points: vec![
            DistancePoint { d: 0.1, eta_db: -6.0 },
            DistancePoint { d: 1.0, eta_db: -22.0 },
        ],
    };
    let law = DistanceModel::PowerLaw {
        eta_ref: 0.25,
        d_ref: 0.1,
        exponent: 2.0,
    };
    for d in [0.1, 0.3, 1.0] {
        println!("d {d} m: table {:.2} dB, power law {:.2} dB", distance_to_eta_db(&table, d)?, distance_to_eta_db(&law, d)?);
    }
    Ok(())
}

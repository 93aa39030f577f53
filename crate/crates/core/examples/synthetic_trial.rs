//! Writes a synthetic two-arm trial (N = 169, 83 treated, 9 baseline
//! covariates, continuous and binary outcomes) to stdout as CSV.
//!
//! `cargo run -p owadj --example synthetic_trial > crates/core/data/synthetic_trial.csv`

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const N: usize = 169;
const N_TREATED: usize = 83;

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).unwrap().sample(rng)
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut cpap: Vec<u8> = (0..N).map(|i| u8::from(i < N_TREATED)).collect();
    cpap.shuffle(&mut rng);

    println!("id,cpap,age,male,white,site1,bmi,sbp0,sdp0,ahi0,ess0,sbp6,ess6,htn6");
    for (i, &z) in cpap.iter().enumerate() {
        let age = normal(&mut rng, 64.4, 7.4).round();
        let male = u8::from(rng.random_bool(0.63));
        let white = u8::from(rng.random_bool(0.9));
        let site1 = u8::from(rng.random_bool(0.32));
        let bmi = normal(&mut rng, 31.7, 6.0).max(18.0);
        let sbp0 = normal(&mut rng, 124.3, 13.2);
        let sdp0 = normal(&mut rng, 63.1, 10.7).round();
        let ahi0 = normal(&mut rng, 28.8, 15.4).max(5.0);
        let ess0 = normal(&mut rng, 8.3, 4.5).round().clamp(0.0, 24.0);
        let zf = f64::from(z);

        let sbp6 = 124.0 + 0.65 * (sbp0 - 124.3) + 0.2 * (bmi - 31.7) + 0.05 * (ahi0 - 28.8) - 3.0 * zf
            + normal(&mut rng, 0.0, 9.0);
        let ess6 = 1.5 + 0.7 * ess0 - 0.02 * (age - 64.4) - 1.2 * zf + normal(&mut rng, 0.0, 2.5);
        let htn6 = u8::from(sbp6 >= 130.0);
        println!(
            "{},{z},{age},{male},{white},{site1},{bmi:.1},{sbp0:.1},{sdp0},{ahi0:.1},{ess0},{sbp6:.1},{ess6:.1},{htn6}",
            i + 1
        );
    }
}

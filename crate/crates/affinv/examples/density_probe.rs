//! Probe the density distribution of the majority construction across
//! seeds, per modulus. Used to calibrate retry policies: at desk scales
//! the vote is dominated by the global sign sum, so most seeds give a
//! density near 0 or 1 and only a fraction land near 1/2.

use affinv::arith::Prime;
use affinv::construct::{majority_set, sample_signs, Strategy};
use affinv::family::{derive_params, Family, Overrides};

fn main() {
    for &(p, trials) in &[(10007u64, 20000usize), (100003, 4000), (1000003, 1500)] {
        let prime = Prime::new(p).unwrap();
        let params = derive_params(prime, 2, Overrides::default()).unwrap();
        let family = Family::new(&params).unwrap();
        let mut densities: Vec<f64> = Vec::with_capacity(trials);
        for seed in 0..trials as u64 {
            let signs = sample_signs(prime, seed);
            let set = majority_set(&family, &signs, Strategy::Windowed).unwrap();
            densities.push(set.density());
        }
        densities.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |f: f64| densities[((densities.len() - 1) as f64 * f) as usize];
        let within = |w: f64| {
            densities.iter().filter(|d| (*d - 0.5).abs() <= w).count() as f64
                / densities.len() as f64
        };
        println!(
            "p = {p:8} width/p = {:.3}  q25 {:.4} med {:.4} q75 {:.4}  \
             P(|d-1/2|<=0.02) = {:.5}  P(<=0.05) = {:.5}  P(<=0.10) = {:.5}",
            params.width() as f64 / p as f64,
            q(0.25),
            q(0.50),
            q(0.75),
            within(0.02),
            within(0.05),
            within(0.10),
        );
    }
}

//! Deterministic parameter sampling.
//!
//! Draws come from ChaCha8 seeded with `seed` on a numbered stream, so every
//! consumer of randomness in the pipeline has its own reproducible sequence.
//! Uniform variates use the top 53 bits of each 64-bit output.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fom::{Parameter, ParameterDomain};

/// Stream offsets derived from the master seed.
pub mod streams {
    pub const ROM_TRAIN: u64 = 1;
    pub const ROM_TEST: u64 = 2;
    pub const ML_TEST: u64 = 3;
    pub const TIMING: u64 = 4;
    pub const END_TO_END: u64 = 5;
    pub const CALIBRATION: u64 = 6;
}

fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `n` i.i.d. uniform samples in the box from stream 0 of `seed`.
pub fn sample_parameters(domain: &ParameterDomain, n: usize, seed: u64) -> Vec<Parameter> {
    sample_stream(domain, n, seed, 0)
}

pub fn sample_stream(domain: &ParameterDomain, n: usize, seed: u64, stream: u64) -> Vec<Parameter> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let lo = domain.lower;
    let hi = domain.upper;
    (0..n)
        .map(|_| {
            let a = unit_uniform(&mut rng);
            let b = unit_uniform(&mut rng);
            Parameter {
                da: lo.da + a * (hi.da - lo.da),
                pe: lo.pe + b * (hi.pe - lo.pe),
            }
        })
        .collect()
}

/// The four box corners ordered lexicographically by `(Da, Pe)`.
pub fn corner_parameters(domain: &ParameterDomain) -> [Parameter; 4] {
    let (l, u) = (domain.lower, domain.upper);
    [
        Parameter { da: l.da, pe: l.pe },
        Parameter { da: l.da, pe: u.pe },
        Parameter { da: u.da, pe: l.pe },
        Parameter { da: u.da, pe: u.pe },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> ParameterDomain {
        ParameterDomain::new(Parameter { da: 0.0, pe: 0.0 }, Parameter { da: 1.0, pe: 1.0 }).unwrap()
    }

    #[test]
    fn zero_samples() {
        assert!(sample_parameters(&unit_box(), 0, 7).is_empty());
    }

    #[test]
    fn same_seed_same_sequence() {
        let d = ParameterDomain::diffusion_dominated();
        assert_eq!(sample_parameters(&d, 50, 42), sample_parameters(&d, 50, 42));
        assert_ne!(sample_parameters(&d, 5, 42), sample_parameters(&d, 5, 43));
        assert_ne!(sample_stream(&d, 5, 42, 1), sample_stream(&d, 5, 42, 2));
    }

    #[test]
    fn prefix_stability() {
        let d = ParameterDomain::diffusion_dominated();
        let long = sample_stream(&d, 20, 9, streams::ROM_TRAIN);
        let short = sample_stream(&d, 5, 9, streams::ROM_TRAIN);
        assert_eq!(&long[..5], &short[..]);
    }

    #[test]
    fn samples_stay_in_box_and_have_right_mean() {
        let d = ParameterDomain::diffusion_dominated();
        let n = 10_000;
        let s = sample_parameters(&d, n, 1234);
        assert!(s.iter().all(|p| d.contains(p)));
        let width = 1.0 - 1e-3;
        let se = width / 12f64.sqrt() / (n as f64).sqrt();
        let target = (1.0 + 1e-3) / 2.0;
        let mean_da = s.iter().map(|p| p.da).sum::<f64>() / n as f64;
        let mean_pe = s.iter().map(|p| p.pe).sum::<f64>() / n as f64;
        assert!((mean_da - target).abs() < 3.0 * se, "{mean_da}");
        assert!((mean_pe - target).abs() < 3.0 * se, "{mean_pe}");
    }

    #[test]
    fn degenerate_box_samples_fixed_value() {
        let d = ParameterDomain::new(Parameter { da: 0.5, pe: 0.0 }, Parameter { da: 0.5, pe: 1.0 }).unwrap();
        assert!(sample_parameters(&d, 10, 3).iter().all(|p| p.da == 0.5));
    }

    #[test]
    fn corners() {
        let c = corner_parameters(&ParameterDomain::diffusion_dominated());
        let expect = [(1e-3, 1e-3), (1e-3, 1.0), (1.0, 1e-3), (1.0, 1.0)];
        for (p, (a, b)) in c.iter().zip(expect) {
            assert_eq!((p.da, p.pe), (a, b));
        }
        let u = corner_parameters(&unit_box());
        assert_eq!((u[1].da, u[1].pe), (0.0, 1.0));
        let pt = Parameter { da: 0.3, pe: 0.3 };
        let degenerate = ParameterDomain::new(pt, pt).unwrap();
        assert!(corner_parameters(&degenerate).iter().all(|p| *p == pt));
    }
}

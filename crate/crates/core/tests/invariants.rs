use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use zkstrip::basis::{BoundaryCase, Grid, SpectralField, Transform};
use zkstrip::io::{read_snapshot, write_snapshot, ConfigFile, SnapshotHeader};
use zkstrip::nonlinearity::{Flux, Nonlinearity, TruncatedNonlinearity};
use zkstrip::propagator::{propagate, DispersionParams};
use zkstrip::weights::make_rho;

fn grid(case: BoundaryCase) -> Arc<Grid> {
    Grid::new(case, 10.0, 32, 2.0 * PI, 8).unwrap()
}

fn spectrum(g: &Arc<Grid>, seed: &[f64]) -> SpectralField {
    let mut sf = SpectralField::zeros(g.clone());
    for (i, w) in seed.chunks(2).enumerate() {
        let (j, l) = ((i % 6) as i64 + 1, i / 6 % g.n_modes());
        let c = Complex64::new(w[0], w[1]);
        sf.set(j, l, c);
        sf.set(-j, l, c.conj());
    }
    sf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snapshots_round_trip_bitwise(values in prop::collection::vec(any::<f64>(), 32 * 8), time in 0.0f64..10.0) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let h = SnapshotHeader::new(&grid(BoundaryCase::Neumann), time, "zk", 0.0, Some(0.5));
        write_snapshot(&p, &h, &values).unwrap();
        let (back, got) = read_snapshot(&p).unwrap();
        prop_assert_eq!(back, h);
        prop_assert!(got.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_flux_is_exact_inside_and_linear_outside(
        coeffs in prop::collection::vec(-2.0f64..2.0, 1..4),
        h in 0.05f64..1.0,
        s in -1.0f64..1.0,
    ) {
        let flux = Flux::Polynomial(coeffs);
        let tn = TruncatedNonlinearity::new(Nonlinearity::new(flux.clone()).unwrap(), Some(h)).unwrap();
        let u = s / h;
        let (v, d) = tn.eval(u);
        prop_assert_eq!(v.to_bits(), flux.g(u).to_bits());
        prop_assert_eq!(d.to_bits(), flux.dg(u).to_bits());
        // far outside the cutoff the derivative no longer grows
        let (_, d_far) = tn.eval(10.0 / h);
        let (_, d_farther) = tn.eval(20.0 / h);
        prop_assert!((d_far - d_farther).abs() <= 1e-9 * (1.0 + d_far.abs()));
    }

    #[test]
    fn propagator_is_a_contractive_semigroup(
        case_ix in 0usize..4,
        seed in prop::collection::vec(-1.0f64..1.0, 12),
        delta in 0.0f64..1.0,
        a in 0.0f64..0.7,
        b in 0.0f64..0.7,
    ) {
        let g = grid(BoundaryCase::ALL[case_ix]);
        let t = Transform::new(&g).unwrap();
        let lam = t.lambdas();
        let sf = spectrum(&g, &seed);
        let p = |time: f64, s: &SpectralField| propagate(s, &lam, DispersionParams::new(delta, time).unwrap()).unwrap();
        let two = p(b, &p(a, &sf));
        let one = p(a + b, &sf);
        let scale = sf.l2_norm().max(1e-300);
        prop_assert!(two.sub(&one).l2_norm() <= 1e-13 * scale);
        prop_assert!(one.l2_norm() <= sf.l2_norm() * (1.0 + 1e-14));
        prop_assert!(one.symmetry_defect() <= 1e-14 * scale);
    }

    #[test]
    fn rho_is_positive_and_nondecreasing(alpha in 0.1f64..3.0, beta in 0.1f64..3.0, x in -20.0f64..20.0, dx in 0.0f64..5.0) {
        let rho = make_rho(alpha, beta).unwrap();
        let (a, b) = (rho.value(x), rho.value(x + dx));
        prop_assert!(a > 0.0);
        prop_assert!(b >= a * (1.0 - 1e-14));
        prop_assert!(rho.d(x, 1) >= -1e-14 * a);
    }

    #[test]
    fn configs_round_trip_through_toml(nx in 3usize..9, ny in 2usize..40, delta in 0.0f64..1.0, seed in 0..=i64::MAX as u64) {
        let text = format!(
            "seed = {seed}\n[grid]\ncase = \"b\"\nx_half_width = 12.5\nnx = {}\nwidth = 3.0\nny = {ny}\n[run]\ndelta = {delta}\n",
            1usize << nx
        );
        let cfg = ConfigFile::parse(&text).unwrap();
        let again = ConfigFile::parse(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(again, cfg);
    }
}

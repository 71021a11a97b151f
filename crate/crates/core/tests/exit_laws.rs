use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snbranch_core::scale::PotentialDensity;
use snbranch_core::window::WindowLaw;

mod common;

#[test]
fn convolution_reproduces_potential_density() {
    for m in common::catalog() {
        let w = WindowLaw::new(m).unwrap();
        let pd = PotentialDensity::new(m, 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=80 {
            let z = -10.0 + 0.25 * i as f64;
            if z == 0.0 {
                continue;
            }
            worst = worst.max((common::difference_density(&w, z) - pd.theta(z).unwrap()).abs());
        }
        assert!(worst <= 1e-3, "{}: {worst}", m.name());
    }
}

#[test]
fn d_law_transform() {
    for m in common::catalog() {
        let w = WindowLaw::new(m).unwrap();
        let phi = w.phi1();
        for lam in [0.1, 0.5, 0.5 * phi] {
            let body = common::integrate_half_line(
                |z| (-lam * z).exp() * w.d_density(z).unwrap(),
                0.05,
                1.1,
                25.0 / lam,
            );
            let got = body + w.atom0();
            let expect = (phi - lam) / (phi * (1.0 - m.psi(lam)));
            assert!((got / expect - 1.0).abs() < 1e-3, "{} λ={lam}: {got} {expect}", m.name());
            let t = w.d_transform(Complex64::new(lam, 0.0)).re;
            assert!((t / expect - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn sampled_depth_passes_kolmogorov_smirnov() {
    let n = 4000;
    for (k, m) in common::catalog().into_iter().enumerate() {
        let w = WindowLaw::new(m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11 + k as u64);
        let mut xs: Vec<f64> = (0..n).map(|_| w.sample_d(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let mut stat: f64 = 0.0;
        let mut i = 0;
        while i < n {
            let x = xs[i];
            let mut j = i;
            while j < n && xs[j] == x {
                j += 1;
            }
            let cdf = 1.0 - w.d_tail(x).unwrap();
            let below = if x == 0.0 { 0.0 } else { cdf };
            stat = stat.max((cdf - j as f64 / n as f64).abs());
            stat = stat.max((below - i as f64 / n as f64).abs());
            i = j;
        }
        // 1% critical value of the Kolmogorov distribution.
        let crit = 1.628 / (n as f64).sqrt();
        assert!(stat < crit, "{}: {stat} vs {crit}", m.name());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn position_never_exceeds_running_max(seed in any::<u64>(), idx in 0usize..4) {
        let w = WindowLaw::new(common::catalog()[idx]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let (s, l) = w.sample_window(&mut rng);
            prop_assert!(s >= 0.0 && l <= s);
        }
    }
}

use num_complex::Complex64;
use proptest::prelude::*;

use mixnoise::config::ExperimentSpec;
use mixnoise::dynamics::{run_trajectory, AmplitudeState, SystemParams};
use mixnoise::ensemble::{run_ensemble, EnsemblePoint};
use mixnoise::noise::{mix, NoiseModel};
use mixnoise::observables::{concurrence_wootters, pure_state_concurrence, x_state};
use mixnoise::spectral::hf_fraction;
use mixnoise::{RngStream, TimeGrid};

fn grid() -> TimeGrid {
    TimeGrid::spanning(0.0, 2.0, 1e-2).unwrap()
}

fn amp() -> impl Strategy<Value = Complex64> {
    (-0.35f64..0.35, -0.35f64..0.35).prop_map(|(re, im)| Complex64::new(re, im))
}

fn combine(a: Complex64, x: &AmplitudeState, b: Complex64, y: &AmplitudeState) -> AmplitudeState {
    AmplitudeState {
        c1: a * x.c1 + b * y.c1,
        c2: a * x.c2 + b * y.c2,
        c3: a * x.c3 + b * y.c3,
        c4: a * x.c4 + b * y.c4,
        memory: a * x.memory + b * y.memory,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // The amplitude equations are linear for any fixed noise path.
    #[test]
    fn evolution_is_linear(x1 in amp(), x2 in amp(), y1 in amp(), y2 in amp(), seed in 0u64..1000) {
        let path = NoiseModel::ou(15.0, 1.0).sample(&grid(), RngStream::new(seed, 0)).unwrap();
        let params = SystemParams { x0: [0.4, 1.1], ..SystemParams::default() };
        let (x, y) = (AmplitudeState::atomic(x1, x2), AmplitudeState::atomic(y1, y2));
        let (a, b) = (Complex64::new(0.6, -0.3), Complex64::new(-0.2, 0.5));
        let rx = run_trajectory(&params, &path, &x, 50).unwrap();
        let ry = run_trajectory(&params, &path, &y, 50).unwrap();
        let rz = run_trajectory(&params, &path, &combine(a, &x, b, &y), 50).unwrap();
        for ((sx, sy), sz) in rx.states.iter().zip(&ry.states).zip(&rz.states) {
            prop_assert!(combine(a, sx, b, sy).max_abs_diff(sz) < 1e-12);
        }
    }

    // Relabelling the atoms swaps their amplitudes and nothing else.
    #[test]
    fn atom_exchange_symmetry(x0a in 0.0f64..3.0, x0b in 0.0f64..3.0, c1 in amp(), c2 in amp(), seed in 0u64..1000) {
        let path = NoiseModel::telegraph(0.2).sample(&grid(), RngStream::new(seed, 0)).unwrap();
        let params = SystemParams { x0: [x0a, x0b], g0: [1.0, 0.7], ..SystemParams::default() };
        let a = run_trajectory(&params, &path, &AmplitudeState::atomic(c1, c2), 20).unwrap();
        let b = run_trajectory(&params.swapped(), &path, &AmplitudeState::atomic(c2, c1), 20).unwrap();
        for (s, t) in a.states.iter().zip(&b.states) {
            prop_assert!((s.c1 - t.c2).norm() < 1e-14 && (s.c2 - t.c1).norm() < 1e-14);
            prop_assert!((s.c3 - t.c3).norm() < 1e-14 && (s.memory - t.memory).norm() < 1e-14);
        }
    }

    // A mixture path is exactly p * a + (1 - p) * b of its component paths.
    #[test]
    fn mixture_is_pointwise_exact(p in 0.0f64..=1.0, seed in 0u64..1000, j in 0u64..1000) {
        let (a, b) = (NoiseModel::ou(5.0, 1.0), NoiseModel::telegraph(0.1));
        let s = RngStream::new(seed, j);
        let mixed = NoiseModel::mixture(a.clone(), b.clone(), p).sample(&grid(), s).unwrap();
        let pa = a.sample(&grid(), s.component(0)).unwrap();
        let pb = b.sample(&grid(), s.component(1)).unwrap();
        let direct = mix(&pa, &pb, p).unwrap();
        for (u, v) in mixed.values().iter().zip(direct.values()) {
            prop_assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    // Faster O-U noise at fixed strength carries more power above any cutoff.
    #[test]
    fn ou_hf_power_grows_with_rate(g in 0.5f64..100.0, factor in 1.05f64..4.0, wc in 0.05f64..5.0) {
        let grid = TimeGrid::spanning(0.0, 20.0, 1e-3).unwrap();
        let nyq = grid.nyquist();
        let lo = hf_fraction(&NoiseModel::ou(g, 1.0), wc, nyq, &grid).unwrap();
        let hi = hf_fraction(&NoiseModel::ou(g * factor, 1.0), wc, nyq, &grid).unwrap();
        prop_assert!(hi.hf_power > lo.hf_power);
        prop_assert!(hi.hf_fraction >= lo.hf_fraction - 1e-12);
    }

    // Pure single-excitation states: Wootters reduces to 2|c1 c2|.
    #[test]
    fn pure_state_concurrence_matches_wootters(c1 in amp(), c2 in amp()) {
        let rho = x_state(c1.norm_sqr(), c2.norm_sqr(), c1 * c2.conj()).unwrap();
        let w = concurrence_wootters(&rho).unwrap();
        prop_assert!((w - pure_state_concurrence(c1, c2)).abs() < 1e-12);
    }
}

#[test]
fn ensemble_independent_of_workers() {
    let point = EnsemblePoint {
        n_traj: 37,
        master_seed: 9,
        stride: 10,
        ..EnsemblePoint::new(SystemParams::default(), NoiseModel::mixture(NoiseModel::ou(10.0, 1.0), NoiseModel::flicker(1.0, 1.0), 0.3), grid())
    };
    let one = run_ensemble(&point, 1).unwrap();
    for w in [2, 3, 8] {
        let r = run_ensemble(&point, w).unwrap();
        assert_eq!(one.concurrence.values, r.concurrence.values);
        assert_eq!(one.concurrence.stderr, r.concurrence.stderr);
        assert_eq!(one.mean_norm, r.mean_norm);
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "ini") {
            let spec = ExperimentSpec::from_file(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            assert_eq!(spec.digest(), ExperimentSpec::from_file(&p).unwrap().digest());
            n += 1;
        }
    }
    assert!(n >= 5);
}

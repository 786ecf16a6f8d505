use resdiff_core::map_core::examples::{asymmetric, doubling};
use resdiff_core::torus_transfer::*;

fn kernel(map: &resdiff_core::map_core::BernoulliMap, eps: f64, g: usize) -> DisplacementKernel {
    build_displacement_kernel(map, eps, UlamGrid::new(1, g), KernelOptions::default()).unwrap()
}

#[test]
fn chapman_kolmogorov() {
    let k = kernel(&asymmetric(), 0.1, 96);
    let two = k.chain.compose(&k.chain);
    let p = k.chain.torus_matrix().to_dense();
    let p2 = two.torus_matrix().to_dense();
    assert!((&p * &p - p2).abs().max() < 1e-14);
    let mu = vec![1.0 / 96.0; 96];
    let one_step = variance_path(&k.chain, &[1.0], &mu, 20);
    let two_step = variance_path(&two, &[1.0], &mu, 10);
    for n in 0..=10 {
        assert!((one_step[2 * n] - two_step[n]).abs() < 1e-11, "n = {n}");
    }
}

#[test]
fn kv_rate_converges_under_refinement() {
    let rates: Vec<f64> = [256, 512]
        .iter()
        .map(|&g| {
            let k = kernel(&doubling(), 0.1, g);
            let sol = corrector_solve(&k.chain, CorrectorMode::Linear).unwrap();
            kv_rate(&k.chain, &sol, &[1.0]).unwrap()
        })
        .collect();
    assert!((rates[0] - rates[1]).abs() < 0.05 * rates[1], "{rates:?}");
}

#[test]
fn corrector_residual_and_modes() {
    let k = kernel(&doubling(), 0.05, 512);
    let lin = corrector_solve(&k.chain, CorrectorMode::Linear).unwrap();
    assert!(lin.residual <= 1e-8, "{}", lin.residual);
    let ser = corrector_solve(&k.chain, CorrectorMode::series()).unwrap();
    let diff = lin.chi.iter().zip(&ser.chi).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff <= 10.0 * DEFAULT_SERIES_TOL, "{diff}");
}

#[test]
fn mixing_modes_agree() {
    let k = kernel(&doubling(), 0.05, 1024);
    let p = k.chain.torus_matrix();
    let a = mixing_time(&p, MIXING_THRESHOLD, DEFAULT_MIXING_CAP, MixingMode::Matvec).unwrap();
    let b = mixing_time(&p, MIXING_THRESHOLD, DEFAULT_MIXING_CAP, MixingMode::DensePowering).unwrap();
    assert_eq!(a, b);
    let da = distance_profile(&p, a, MixingMode::Matvec).unwrap();
    let db = distance_profile(&p, a, MixingMode::DensePowering).unwrap();
    for (x, y) in da.iter().zip(&db) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn kernel_file_round_trip() {
    let k = kernel(&doubling(), 0.1, 64);
    let mut buf = Vec::new();
    write_kernel(&k, &mut buf).unwrap();
    let (grid, eps, chain) = read_kernel(&buf[..]).unwrap();
    assert_eq!(grid, k.grid);
    assert_eq!(eps, 0.1);
    assert_eq!(chain.torus_matrix(), k.chain.torus_matrix());
}

use rayon::prelude::*;

use super::{LatticeChain, TransferError, UlamGrid};
use crate::map_core::PeriodicMap;
use crate::numerics::{gaussian_tail_radius, smoothed_interval_mass};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    /// Gaussian mass allowed outside the truncated lattice sum.
    pub tail_tol: f64,
    /// Source sub-cells per axis (`q_sub = subsamples^d`).
    pub subsamples: usize,
    /// Entries below this are dropped before the row is renormalised.
    pub prune: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { tail_tol: 1e-12, subsamples: 4, prune: 1e-14 }
    }
}

/// Ulam discretisation of one step of `X_{n+1} = φ(X_n) + ε ξ`, resolved by
/// the lattice displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementKernel {
    pub grid: UlamGrid,
    pub eps: f64,
    pub options: KernelOptions,
    pub chain: LatticeChain,
    /// Largest mass removed from a row by truncation and pruning.
    pub omitted_mass: f64,
}

impl DisplacementKernel {
    pub fn window(&self) -> (Vec<i64>, Vec<i64>) {
        self.chain.jump_window()
    }
}

/// Source sub-cell image: a uniform box `lo + [0, w)^d`, or a point when
/// `w = 0`.
struct Image {
    lo: Vec<f64>,
    w: f64,
}

/// Builds `q(g, g', j)`: a uniform start in source cell `g` is mapped by `φ`
/// and smeared by the Gaussian; the mass landing in `j + cell g'` is
/// integrated exactly per target cell.
///
/// Each source cell is split into `subsamples^d` sub-cells. On sub-cells
/// where `φ` is affine the image is a uniform box and the Gaussian is
/// integrated against it in closed form; elsewhere the sub-cell is
/// represented by the image of its midpoint.
pub fn build_displacement_kernel<M: PeriodicMap + ?Sized>(
    map: &M,
    eps: f64,
    grid: UlamGrid,
    options: KernelOptions,
) -> Result<DisplacementKernel, TransferError> {
    let d = map.dim();
    if !(1..=2).contains(&d) || grid.dim != d {
        return Err(TransferError::UnsupportedDimension { dim: d });
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(TransferError::NonpositiveEpsilon { eps });
    }
    if grid.cells_per_dim < 8 {
        return Err(TransferError::GridTooCoarse { cells: grid.cells_per_dim });
    }
    let n = grid.cells_per_dim;
    let nf = n as f64;
    let q = options.subsamples.max(1);
    let radius = gaussian_tail_radius(options.tail_tol) * eps;
    let sub = grid.cell_width() / q as f64;
    let q_total = q.pow(d as u32);

    let rows: Vec<(Vec<(usize, Vec<i64>, f64)>, f64)> = (0..grid.states())
        .into_par_iter()
        .map(|g| {
            let corner = grid.corner(g);
            let mut images = Vec::with_capacity(q_total);
            let mut sub_corner = vec![0.0; d];
            let mut mid = vec![0.0; d];
            let mut out = vec![0.0; d];
            for s in 0..q_total {
                let mut r = s;
                for a in 0..d {
                    sub_corner[a] = corner[a] + (r % q) as f64 * sub;
                    r /= q;
                }
                let image = match map.affine_box_image(&sub_corner, sub) {
                    Some((lo, w)) => Image { lo, w },
                    None => {
                        for a in 0..d {
                            mid[a] = sub_corner[a] + 0.5 * sub;
                        }
                        map.apply_unit(&mid, &mut out);
                        Image { lo: out.clone(), w: 0.0 }
                    }
                };
                images.push(image);
            }
            // union box of fine target indices per axis
            let mut kmin = vec![i64::MAX; d];
            let mut kmax = vec![i64::MIN; d];
            for im in &images {
                for a in 0..d {
                    kmin[a] = kmin[a].min(((im.lo[a] - radius) * nf).floor() as i64);
                    kmax[a] = kmax[a].max(((im.lo[a] + im.w + radius) * nf).floor() as i64);
                }
            }
            let extent: Vec<usize> = (0..d).map(|a| (kmax[a] - kmin[a] + 1) as usize).collect();
            let total: usize = extent.iter().product();
            let mut acc = vec![0.0; total];
            let weight = 1.0 / q_total as f64;
            let mut axis_mass: Vec<Vec<f64>> = extent.iter().map(|&e| vec![0.0; e]).collect();
            for im in &images {
                for a in 0..d {
                    for (i, m) in axis_mass[a].iter_mut().enumerate() {
                        let k = kmin[a] + i as i64;
                        *m = smoothed_interval_mass(k as f64 / nf, (k + 1) as f64 / nf, im.lo[a], im.w, eps);
                    }
                }
                if d == 1 {
                    for (x, m) in acc.iter_mut().zip(&axis_mass[0]) {
                        *x += weight * m;
                    }
                } else {
                    let e0 = extent[0];
                    for (i1, m1) in axis_mass[1].iter().enumerate() {
                        if *m1 == 0.0 {
                            continue;
                        }
                        for (i0, m0) in axis_mass[0].iter().enumerate() {
                            acc[i1 * e0 + i0] += weight * m0 * m1;
                        }
                    }
                }
            }
            let mut row = Vec::new();
            let mut kept = 0.0;
            for (idx, &p) in acc.iter().enumerate() {
                if p < options.prune {
                    continue;
                }
                let mut r = idx;
                let mut jump = vec![0i64; d];
                let mut to = 0usize;
                let mut stride = 1usize;
                for a in 0..d {
                    let k = kmin[a] + (r % extent[a]) as i64;
                    r /= extent[a];
                    jump[a] = k.div_euclid(n as i64);
                    to += k.rem_euclid(n as i64) as usize * stride;
                    stride *= n;
                }
                kept += p;
                row.push((to, jump, p));
            }
            for e in row.iter_mut() {
                e.2 /= kept;
            }
            (row, (1.0 - kept).abs())
        })
        .collect();

    let omitted_mass = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let chain = LatticeChain::from_rows(d, grid.centers(), rows.into_iter().map(|r| r.0).collect());
    Ok(DisplacementKernel { grid, eps, options, chain, omitted_mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::examples::{asymmetric, doubling, quadrant, ShearMap};

    fn kernel<M: PeriodicMap>(map: &M, eps: f64, g: usize) -> DisplacementKernel {
        build_displacement_kernel(map, eps, UlamGrid::new(map.dim(), g), KernelOptions::default()).unwrap()
    }

    #[test]
    fn rows_sum_to_one() {
        for k in [kernel(&doubling(), 0.1, 64), kernel(&asymmetric(), 0.05, 96), kernel(&ShearMap::default(), 0.2, 16)] {
            for s in k.chain.row_sums() {
                assert!((s - 1.0).abs() < 1e-10);
            }
            assert!(k.omitted_mass < 1e-11);
        }
    }

    #[test]
    fn doubling_kernel_is_doubly_stochastic() {
        let k = kernel(&doubling(), 0.05, 256);
        for c in k.chain.torus_matrix().column_sums() {
            assert!((c - 1.0).abs() < 1e-10, "{c}");
        }
    }

    #[test]
    fn asymmetric_columns_within_discretisation_error() {
        let g = 300;
        let k = kernel(&asymmetric(), 0.05, g);
        for c in k.chain.torus_matrix().column_sums() {
            assert!((c - 1.0).abs() < 5.0 / g as f64);
        }
    }

    #[test]
    fn large_noise_is_nearly_flat() {
        let k = kernel(&doubling(), 3.0, 32);
        let p = k.chain.torus_matrix().to_dense();
        for i in 0..32 {
            let l1: f64 = (0..32).map(|j| (p[(i, j)] - 1.0 / 32.0).abs()).sum();
            assert!(l1 < 0.01, "{l1}");
        }
    }

    #[test]
    fn window_covers_the_gaussian() {
        let k = kernel(&doubling(), 0.1, 64);
        let (lo, hi) = k.window();
        // φ(Q_0) = [0, 2); 7.1 standard deviations of 0.1 stay within [-1, 2]
        assert_eq!((lo[0], hi[0]), (-1, 2));
    }

    #[test]
    fn two_dimensional_kernel() {
        let k = kernel(&quadrant(), 0.1, 8);
        for s in k.chain.row_sums() {
            assert!((s - 1.0).abs() < 1e-10);
        }
        for c in k.chain.torus_matrix().column_sums() {
            assert!((c - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let g = UlamGrid::new(1, 64);
        assert!(matches!(
            build_displacement_kernel(&doubling(), 0.0, g, KernelOptions::default()),
            Err(TransferError::NonpositiveEpsilon { .. })
        ));
        assert!(matches!(
            build_displacement_kernel(&doubling(), 0.1, UlamGrid::new(1, 4), KernelOptions::default()),
            Err(TransferError::GridTooCoarse { .. })
        ));
    }
}

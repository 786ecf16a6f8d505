//! Kernel files.
//!
//! Binary layout, little endian: `RDKERN01`, `u64 d`, `u64 G`, `f64 ε`,
//! `d × i64` window low, `d × i64` window high, then `f64` probabilities
//! ordered `[g][j][g']` with `j` running over the window box (axis 0
//! fastest). The text form lists nonzero entries as `g j_1 … j_d g' q`.

use std::io::{self, Read, Write};

use super::{DisplacementKernel, LatticeChain, TransferError, UlamGrid};

pub const KERNEL_MAGIC: &[u8; 8] = b"RDKERN01";

fn box_len(lo: &[i64], hi: &[i64]) -> usize {
    lo.iter().zip(hi).map(|(a, b)| (b - a + 1) as usize).product()
}

fn box_index(j: &[i64], lo: &[i64], hi: &[i64]) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for k in 0..j.len() {
        idx += (j[k] - lo[k]) as usize * stride;
        stride *= (hi[k] - lo[k] + 1) as usize;
    }
    idx
}

fn box_point(mut idx: usize, lo: &[i64], hi: &[i64]) -> Vec<i64> {
    lo.iter()
        .zip(hi)
        .map(|(a, b)| {
            let w = (b - a + 1) as usize;
            let j = a + (idx % w) as i64;
            idx /= w;
            j
        })
        .collect()
}

pub fn write_kernel<W: Write>(kernel: &DisplacementKernel, mut w: W) -> io::Result<()> {
    let d = kernel.grid.dim;
    let n = kernel.grid.states();
    let (lo, hi) = kernel.window();
    let jn = box_len(&lo, &hi);
    w.write_all(KERNEL_MAGIC)?;
    w.write_all(&(d as u64).to_le_bytes())?;
    w.write_all(&(kernel.grid.cells_per_dim as u64).to_le_bytes())?;
    w.write_all(&kernel.eps.to_le_bytes())?;
    for x in lo.iter().chain(&hi) {
        w.write_all(&x.to_le_bytes())?;
    }
    let mut block = vec![0.0f64; jn * n];
    let mut bytes = Vec::with_capacity(block.len() * 8);
    for g in 0..n {
        block.iter_mut().for_each(|x| *x = 0.0);
        for t in kernel.chain.row(g) {
            block[box_index(t.jump, &lo, &hi) * n + t.to] += t.prob;
        }
        bytes.clear();
        for x in &block {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn write_kernel_text<W: Write>(kernel: &DisplacementKernel, mut w: W) -> io::Result<()> {
    for g in 0..kernel.grid.states() {
        for t in kernel.chain.row(g) {
            write!(w, "{g}")?;
            for j in t.jump {
                write!(w, " {j}")?;
            }
            writeln!(w, " {} {:.17e}", t.to, t.prob)?;
        }
    }
    Ok(())
}

/// Reads a binary kernel file back into a chain on the cell-centre grid.
pub fn read_kernel<R: Read>(mut r: R) -> Result<(UlamGrid, f64, LatticeChain), TransferError> {
    let bad = |e: io::Error| TransferError::Format(e.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(bad)?;
    if &magic != KERNEL_MAGIC {
        return Err(TransferError::Format("bad magic".into()));
    }
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8], TransferError> {
        r.read_exact(&mut word).map_err(bad)?;
        Ok(word)
    };
    let d = u64::from_le_bytes(next(&mut r)?) as usize;
    let cells = u64::from_le_bytes(next(&mut r)?) as usize;
    if !(1..=2).contains(&d) {
        return Err(TransferError::UnsupportedDimension { dim: d });
    }
    let eps = f64::from_le_bytes(next(&mut r)?);
    let mut window = Vec::with_capacity(2 * d);
    for _ in 0..2 * d {
        window.push(i64::from_le_bytes(next(&mut r)?));
    }
    let (lo, hi) = window.split_at(d);
    if lo.iter().zip(hi).any(|(a, b)| a > b) {
        return Err(TransferError::Format("empty window".into()));
    }
    let grid = UlamGrid::new(d, cells);
    let n = grid.states();
    let jn = box_len(lo, hi);
    let mut bytes = vec![0u8; jn * n * 8];
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut bytes).map_err(bad)?;
        let mut row = Vec::new();
        for (k, c) in bytes.chunks_exact(8).enumerate() {
            let q = f64::from_le_bytes(c.try_into().unwrap());
            if q != 0.0 {
                row.push((k % n, box_point(k / n, lo, hi), q));
            }
        }
        rows.push(row);
    }
    Ok((grid, eps, LatticeChain::from_rows(d, grid.centers(), rows)))
}

#[cfg(test)]
mod tests {
    use super::super::{build_displacement_kernel, KernelOptions};
    use super::*;
    use crate::map_core::examples::quadrant;

    #[test]
    fn binary_round_trip() {
        let k = build_displacement_kernel(&quadrant(), 0.2, UlamGrid::new(2, 8), KernelOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_kernel(&k, &mut buf).unwrap();
        let (grid, eps, chain) = read_kernel(&buf[..]).unwrap();
        assert_eq!(grid, k.grid);
        assert_eq!(eps, 0.2);
        assert_eq!(chain.torus_matrix(), k.chain.torus_matrix());
        for (a, b) in chain.drift().iter().zip(k.chain.drift()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(chain.jump_window(), k.window());
        let mut text = Vec::new();
        write_kernel_text(&k, &mut text).unwrap();
        assert_eq!(String::from_utf8(text).unwrap().lines().count(), k.chain.nnz());
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_kernel(&b"RDKERN02"[..]), Err(TransferError::Format(_))));
        assert!(matches!(read_kernel(&b"RDK"[..]), Err(TransferError::Format(_))));
    }
}

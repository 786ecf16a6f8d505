use serde::Serialize;

/// Uniform partition of `T^d` into `G^d` cells; state `g` has multi-index
/// `(m_0, …, m_{d-1})` with `g = Σ_a m_a G^a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UlamGrid {
    pub dim: usize,
    pub cells_per_dim: usize,
}

impl UlamGrid {
    pub fn new(dim: usize, cells_per_dim: usize) -> Self {
        UlamGrid { dim, cells_per_dim }
    }

    pub fn states(&self) -> usize {
        self.cells_per_dim.pow(self.dim as u32)
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.cells_per_dim as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_width().powi(self.dim as i32)
    }

    pub fn multi_index(&self, mut g: usize) -> Vec<usize> {
        let n = self.cells_per_dim;
        (0..self.dim)
            .map(|_| {
                let m = g % n;
                g /= n;
                m
            })
            .collect()
    }

    pub fn flat_index(&self, m: &[usize]) -> usize {
        m.iter().rev().fold(0, |acc, &x| acc * self.cells_per_dim + x)
    }

    pub fn corner(&self, g: usize) -> Vec<f64> {
        let h = self.cell_width();
        self.multi_index(g).into_iter().map(|m| m as f64 * h).collect()
    }

    pub fn center(&self, g: usize) -> Vec<f64> {
        let h = self.cell_width();
        self.multi_index(g).into_iter().map(|m| (m as f64 + 0.5) * h).collect()
    }

    /// Cell centres, row-major `states × d`.
    pub fn centers(&self) -> Vec<f64> {
        (0..self.states()).flat_map(|g| self.center(g)).collect()
    }
}

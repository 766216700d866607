//! Operators stored by diagonals, for O(N²) products with dense matrices.

use crate::linalg::{CMat, C64};

/// Sparse square operator: band `d` holds entries `(i, i + d)`, indexed by
/// row `i`.
#[derive(Clone, Debug)]
pub(crate) struct Banded {
    n: usize,
    bands: Vec<(isize, Vec<C64>)>,
}

fn rows(n: usize, d: isize) -> std::ops::Range<usize> {
    if d >= 0 {
        0..n.saturating_sub(d as usize)
    } else {
        (-d) as usize..n
    }
}

impl Banded {
    pub(crate) fn from_dense(m: &CMat) -> Self {
        let n = m.nrows();
        let mut bands = Vec::new();
        for d in -(n as isize - 1)..n as isize {
            let vals: Vec<C64> = (0..n)
                .map(|i| {
                    let j = i as isize + d;
                    if j >= 0 && (j as usize) < n {
                        m[(i, j as usize)]
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
                .collect();
            if vals.iter().any(|z| *z != C64::new(0.0, 0.0)) {
                bands.push((d, vals));
            }
        }
        Banded { n, bands }
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.bands.is_empty()
    }

    /// `out += self * rho`
    pub(crate) fn left_mul_add(&self, rho: &CMat, out: &mut CMat) {
        let n = self.n;
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        for j in 0..n {
            let col = j * n;
            for (d, vals) in &self.bands {
                for i in rows(n, *d) {
                    dst[col + i] += vals[i] * src[col + (i as isize + d) as usize];
                }
            }
        }
    }

    /// `out += scale * rho * self†`
    pub(crate) fn right_mul_adjoint_add(&self, rho: &CMat, out: &mut CMat, scale: f64) {
        // (ρ K†)_{ij} = Σ_d ρ_{i, j+d} conj(K_{j, j+d})
        let n = self.n;
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        for (d, vals) in &self.bands {
            for j in rows(n, *d) {
                let c = vals[j].conj() * scale;
                let from = (j as isize + d) as usize * n;
                let to = j * n;
                for i in 0..n {
                    dst[to + i] += src[from + i] * c;
                }
            }
        }
    }
}

use crate::error::{Error, Result};

/// Real orthogonal training matrix `S_tr` (`N_tr × N_t`, entries ±1).
///
/// Row `i` is sent during training symbol `i`, column `t` on TX antenna `t`,
/// on every tone. Columns are the leading columns of a Sylvester-Hadamard
/// matrix, so `S_trᵀ S_tr = N_tr · I`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preamble {
    pub n_tr: usize,
    pub n_tx: usize,
    entries: Vec<i8>,
}

impl Preamble {
    #[inline]
    pub fn get(&self, i: usize, t: usize) -> i8 {
        self.entries[i * self.n_tx + t]
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.entries[i * self.n_tx..(i + 1) * self.n_tx]
    }

    /// Integer Gram matrix `S_trᵀ S_tr`, row-major `N_t × N_t`.
    pub fn gram(&self) -> Vec<i64> {
        let mut g = vec![0i64; self.n_tx * self.n_tx];
        for a in 0..self.n_tx {
            for b in 0..self.n_tx {
                g[a * self.n_tx + b] = (0..self.n_tr)
                    .map(|i| self.get(i, a) as i64 * self.get(i, b) as i64)
                    .sum();
            }
        }
        g
    }

    pub fn is_orthogonal(&self) -> bool {
        let g = self.gram();
        (0..self.n_tx).all(|a| {
            (0..self.n_tx).all(|b| g[a * self.n_tx + b] == if a == b { self.n_tr as i64 } else { 0 })
        })
    }
}

/// Smallest admissible training length for `n_tx` antennas.
pub fn default_training_len(n_tx: usize) -> usize {
    n_tx.next_power_of_two()
}

pub fn gen_preamble(n_tx: usize, n_tr: usize) -> Result<Preamble> {
    if n_tx == 0 {
        return Err(Error::InvalidConfig("no transmit antennas".into()));
    }
    if n_tr < n_tx {
        return Err(Error::InvalidConfig(format!(
            "{n_tr} training symbols cannot resolve {n_tx} streams"
        )));
    }
    if !n_tr.is_power_of_two() {
        return Err(Error::InvalidConfig(format!("training length {n_tr} is not a power of two")));
    }
    // Sylvester construction: H[i][j] = (-1)^{popcount(i & j)}
    let entries = (0..n_tr)
        .flat_map(|i| (0..n_tx).map(move |t| if (i & t).count_ones() % 2 == 0 { 1 } else { -1 }))
        .collect();
    Ok(Preamble {
        n_tr,
        n_tx,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hadamard_columns_are_orthogonal() {
        for (nt, ntr) in [(1, 1), (2, 2), (3, 4), (4, 4), (2, 8)] {
            let p = gen_preamble(nt, ntr).unwrap();
            assert!(p.is_orthogonal(), "{nt}x{ntr}");
        }
        let p = gen_preamble(2, 2).unwrap();
        assert_eq!(p.row(0), &[1, 1]);
        assert_eq!(p.row(1), &[1, -1]);
    }

    #[test]
    fn three_of_four_columns() {
        let p = gen_preamble(3, 4).unwrap();
        assert_eq!(p.gram(), vec![4, 0, 0, 0, 4, 0, 0, 0, 4]);
    }

    #[test]
    fn rejects_short_or_odd_training() {
        assert!(gen_preamble(3, 2).is_err());
        assert!(gen_preamble(2, 3).is_err());
    }
}

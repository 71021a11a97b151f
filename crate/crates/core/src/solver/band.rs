//! Banded linear systems with one subdiagonal and `ku` superdiagonals,
//! solved by Gaussian elimination with partial pivoting.

/// Row i stores columns i−1 ..= i+ku+1; the extra column absorbs pivoting
/// fill-in.
#[derive(Clone, Debug)]
pub(crate) struct BandSystem {
    n: usize,
    ku: usize,
    width: usize,
    a: Vec<f64>,
}

impl BandSystem {
    pub fn new(n: usize, ku: usize) -> Self {
        let width = ku + 3;
        BandSystem {
            n,
            ku,
            width,
            a: vec![0.0; n * width],
        }
    }

    fn idx(&self, i: usize, col: usize) -> usize {
        debug_assert!(col + 1 >= i && col <= i + self.ku + 1, "({i}, {col}) outside band");
        i * self.width + col + 1 - i
    }

    pub fn add(&mut self, i: usize, col: usize, v: f64) {
        let k = self.idx(i, col);
        self.a[k] += v;
    }

    fn get(&self, i: usize, col: usize) -> f64 {
        self.a[self.idx(i, col)]
    }

    fn set(&mut self, i: usize, col: usize, v: f64) {
        let k = self.idx(i, col);
        self.a[k] = v;
    }

    /// LU factorisation; None on a zero pivot.
    pub fn factor(mut self) -> Option<BandLu> {
        let n = self.n;
        let ku = self.ku;
        let mut swapped = vec![false; n];
        let mut mult = vec![0.0; n];
        for c in 0..n.saturating_sub(1) {
            let last = (c + ku + 2).min(n - 1);
            if self.get(c + 1, c).abs() > self.get(c, c).abs() {
                for col in c..=last {
                    let top = if col <= c + ku + 1 { self.get(c, col) } else { 0.0 };
                    let bot = self.get(c + 1, col);
                    if col <= c + ku + 1 {
                        self.set(c, col, bot);
                    } else if bot != 0.0 {
                        // Row c+1 never has an entry at c+ku+2.
                        return None;
                    }
                    self.set(c + 1, col, top);
                }
                swapped[c] = true;
            }
            let p = self.get(c, c);
            if p == 0.0 {
                return None;
            }
            let m = self.get(c + 1, c) / p;
            mult[c] = m;
            if m != 0.0 {
                for col in c..=(c + ku + 1).min(n - 1) {
                    let v = self.get(c + 1, col) - m * self.get(c, col);
                    self.set(c + 1, col, v);
                }
            }
        }
        if n > 0 && self.get(n - 1, n - 1) == 0.0 {
            return None;
        }
        Some(BandLu {
            sys: self,
            swapped,
            mult,
        })
    }

    #[cfg(test)]
    fn solve(self, rhs: &[f64]) -> Option<Vec<f64>> {
        self.factor().map(|lu| lu.solve(rhs))
    }
}

/// Factorised [`BandSystem`]; the upper factor is stored in place.
#[derive(Clone, Debug)]
pub(crate) struct BandLu {
    sys: BandSystem,
    swapped: Vec<bool>,
    mult: Vec<f64>,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let s = &self.sys;
        let n = s.n;
        let mut y = b.to_vec();
        for c in 0..n.saturating_sub(1) {
            if self.swapped[c] {
                y.swap(c, c + 1);
            }
            y[c + 1] -= self.mult[c] * y[c];
        }
        #[allow(clippy::needless_range_loop)]
        for i in (0..n).rev() {
            let mut acc = y[i];
            for col in i + 1..=(i + s.ku + 1).min(n - 1) {
                acc -= s.get(i, col) * y[col];
            }
            y[i] = acc / s.get(i, i);
        }
        y
    }
}

//! Smith normal form over the integers, with the unimodular transforms kept.

/// Dense integer matrix, row major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i128>,
}

impl IMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IMat { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = IMat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i128 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: i128) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul(&self, other: &IMat) -> IMat {
        assert_eq!(self.cols, other.rows);
        let mut out = IMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[i128]) -> Vec<i128> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn mul_vec_f64(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) as f64 * v[j]).sum())
            .collect()
    }

    /// Columns `from..` as a new matrix.
    pub fn cols_from(&self, from: usize) -> IMat {
        let mut out = IMat::zeros(self.rows, self.cols - from);
        for i in 0..self.rows {
            for j in from..self.cols {
                out.set(i, j - from, self.get(i, j));
            }
        }
        out
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    // row[dst] += f * row[src]
    fn add_row(&mut self, dst: usize, src: usize, f: i128) {
        if f == 0 {
            return;
        }
        for j in 0..self.cols {
            let v = self.get(src, j);
            self.data[dst * self.cols + j] += f * v;
        }
    }

    fn add_col(&mut self, dst: usize, src: usize, f: i128) {
        if f == 0 {
            return;
        }
        for i in 0..self.rows {
            let v = self.get(i, src);
            self.data[i * self.cols + dst] += f * v;
        }
    }

    fn neg_row(&mut self, r: usize) {
        for j in 0..self.cols {
            self.data[r * self.cols + j] = -self.data[r * self.cols + j];
        }
    }
}

/// Result of `smith`: `p * a * q = d` with `d` diagonal, `d[i] | d[i+1]`,
/// and `pinv`, `qinv` the inverses of `p`, `q`.
#[derive(Clone, Debug)]
pub struct Smith {
    pub d: IMat,
    pub p: IMat,
    pub pinv: IMat,
    pub q: IMat,
    pub qinv: IMat,
    pub rank: usize,
}

impl Smith {
    pub fn diag(&self) -> Vec<i128> {
        (0..self.rank).map(|i| self.d.get(i, i)).collect()
    }
}

pub fn smith(a: &IMat) -> Smith {
    let (m, n) = (a.rows, a.cols);
    let mut d = a.clone();
    let mut p = IMat::identity(m);
    let mut pinv = IMat::identity(m);
    let mut q = IMat::identity(n);
    let mut qinv = IMat::identity(n);
    // Row op E on d: d <- E d, p <- E p, pinv <- pinv E^-1.
    // Col op F on d: d <- d F, q <- q F, qinv <- F^-1 qinv.
    let mut t = 0;
    while t < m.min(n) {
        // pivot: smallest nonzero |entry| in the trailing block
        let mut best: Option<(usize, usize, i128)> = None;
        for i in t..m {
            for j in t..n {
                let v = d.get(i, j).abs();
                if v != 0 && best.is_none_or(|b| v < b.2) {
                    best = Some((i, j, v));
                }
            }
        }
        let Some((pi, pj, _)) = best else { break };
        d.swap_rows(t, pi);
        p.swap_rows(t, pi);
        pinv.swap_cols(t, pi);
        d.swap_cols(t, pj);
        q.swap_cols(t, pj);
        qinv.swap_rows(t, pj);
        loop {
            let piv = d.get(t, t);
            let mut clean = true;
            for i in t + 1..m {
                let v = d.get(i, t);
                if v != 0 {
                    let f = v.div_euclid(piv);
                    d.add_row(i, t, -f);
                    p.add_row(i, t, -f);
                    pinv.add_col(t, i, f);
                    if d.get(i, t) != 0 {
                        clean = false;
                    }
                }
            }
            for j in t + 1..n {
                let v = d.get(t, j);
                if v != 0 {
                    let f = v.div_euclid(piv);
                    d.add_col(j, t, -f);
                    q.add_col(j, t, -f);
                    qinv.add_row(t, j, f);
                    if d.get(t, j) != 0 {
                        clean = false;
                    }
                }
            }
            if clean {
                // divisibility of the trailing block
                let mut bad = None;
                'outer: for i in t + 1..m {
                    for j in t + 1..n {
                        if d.get(i, j) % piv != 0 {
                            bad = Some(i);
                            break 'outer;
                        }
                    }
                }
                match bad {
                    None => break,
                    Some(i) => {
                        d.add_row(t, i, 1);
                        p.add_row(t, i, 1);
                        pinv.add_col(i, t, -1);
                        continue;
                    }
                }
            }
            // move the smallest entry of row/col t to the pivot
            let mut best = (t, t, d.get(t, t).abs());
            for i in t + 1..m {
                let v = d.get(i, t).abs();
                if v != 0 && v < best.2 {
                    best = (i, t, v);
                }
            }
            for j in t + 1..n {
                let v = d.get(t, j).abs();
                if v != 0 && v < best.2 {
                    best = (t, j, v);
                }
            }
            if best.0 != t {
                d.swap_rows(t, best.0);
                p.swap_rows(t, best.0);
                pinv.swap_cols(t, best.0);
            }
            if best.1 != t {
                d.swap_cols(t, best.1);
                q.swap_cols(t, best.1);
                qinv.swap_rows(t, best.1);
            }
        }
        if d.get(t, t) < 0 {
            d.neg_row(t);
            p.neg_row(t);
            // pinv column t negated
            for i in 0..m {
                let v = pinv.get(i, t);
                pinv.set(i, t, -v);
            }
        }
        t += 1;
    }
    let rank = (0..m.min(n)).take_while(|&i| d.get(i, i) != 0).count();
    Smith { d, p, pinv, q, qinv, rank }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(a: &IMat) {
        let s = smith(a);
        assert_eq!(s.p.mul(a).mul(&s.q), s.d);
        assert_eq!(s.p.mul(&s.pinv), IMat::identity(a.rows));
        assert_eq!(s.q.mul(&s.qinv), IMat::identity(a.cols));
        let dg = s.diag();
        for w in dg.windows(2) {
            assert_eq!(w[1] % w[0], 0);
        }
        for i in 0..a.rows {
            for j in 0..a.cols {
                if i != j {
                    assert_eq!(s.d.get(i, j), 0);
                }
            }
        }
    }

    #[test]
    fn small_examples() {
        let a = IMat { rows: 2, cols: 2, data: vec![2, 0, 0, 3] };
        let s = smith(&a);
        assert_eq!(s.diag(), vec![1, 6]);
        check(&a);
        let b = IMat { rows: 3, cols: 3, data: vec![2, 4, 4, -6, 6, 12, 10, -4, -16] };
        assert_eq!(smith(&b).diag(), vec![2, 6, 12]);
        check(&b);
    }

    #[test]
    fn zero_matrix() {
        let a = IMat::zeros(3, 2);
        assert_eq!(smith(&a).rank, 0);
        check(&a);
    }

    proptest::proptest! {
        #[test]
        fn transforms_are_consistent(r in 1usize..6, c in 1usize..6, seed in proptest::collection::vec(-4i128..5, 36)) {
            let a = IMat { rows: r, cols: c, data: seed[..r * c].to_vec() };
            check(&a);
        }
    }
}

//! Exact Euclidean distance transform (two-pass parabola envelope method).
//!
//! Operates on squared distances in cell units: a 1D lower-envelope pass
//! along every row followed by one along every column yields the exact 2D
//! squared distance to the nearest source cell center.

const INF: f64 = 1e20;

/// 1D squared distance transform of sampled function `f` into `d`.
/// `v` and `z` are scratch buffers of length >= n and n+1.
fn dt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        loop {
            let p = v[k];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                debug_assert!(k > 0);
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

/// Squared Euclidean distance (cell units) from every cell to the nearest
/// `true` cell of `source`, row-major with `rows x cols`. Cells of an
/// all-false source end up at a large sentinel (>= INF/2).
pub fn edt_squared(source: &[bool], rows: usize, cols: usize) -> Vec<f64> {
    assert_eq!(source.len(), rows * cols);
    let n = rows.max(cols);
    let mut g = vec![0.0f64; rows * cols];
    let mut f = vec![0.0f64; n];
    let mut d = vec![0.0f64; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];

    for i in 0..rows {
        for j in 0..cols {
            f[j] = if source[i * cols + j] { 0.0 } else { INF };
        }
        dt_1d(&f[..cols], &mut d[..cols], &mut v, &mut z);
        g[i * cols..(i + 1) * cols].copy_from_slice(&d[..cols]);
    }
    for j in 0..cols {
        for i in 0..rows {
            f[i] = g[i * cols + j];
        }
        dt_1d(&f[..rows], &mut d[..rows], &mut v, &mut z);
        for i in 0..rows {
            g[i * cols + j] = d[i];
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(source: &[bool], rows: usize, cols: usize) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                let mut best = f64::INFINITY;
                for si in 0..rows {
                    for sj in 0..cols {
                        if source[si * cols + sj] {
                            let di = si as f64 - i as f64;
                            let dj = sj as f64 - j as f64;
                            best = best.min(di * di + dj * dj);
                        }
                    }
                }
                out[i * cols + j] = best;
            }
        }
        out
    }

    #[test]
    fn single_source_center() {
        let mut src = vec![false; 25];
        src[12] = true; // (2,2) of 5x5
        let d = edt_squared(&src, 5, 5);
        assert_eq!(d[12], 0.0);
        assert_eq!(d[11], 1.0);
        assert_eq!(d[6], 2.0); // diagonal neighbor
        assert_eq!(d[0], 8.0);
    }

    #[test]
    fn matches_brute_force_on_random_grids() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let rows = rng.random_range(1..=30);
            let cols = rng.random_range(1..=30);
            let src: Vec<bool> = (0..rows * cols).map(|_| rng.random_bool(0.15)).collect();
            let fast = edt_squared(&src, rows, cols);
            let slow = brute_force(&src, rows, cols);
            for k in 0..rows * cols {
                if slow[k].is_finite() {
                    assert_eq!(fast[k], slow[k], "cell {k} of {rows}x{cols}");
                } else {
                    assert!(fast[k] >= INF / 2.0);
                }
            }
        }
    }

    #[test]
    fn empty_source_yields_sentinel() {
        let d = edt_squared(&[false; 12], 3, 4);
        assert!(d.iter().all(|&x| x >= INF / 2.0));
    }
}

//! Restarted GMRES with right preconditioning.

/// Solves A x = b to relative residual `rtol`, starting from zero. Returns
/// the iterate and its relative residual.
pub(crate) fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return (x, 0.0);
    }
    let mut r = b.to_vec();
    let mut rel = 1.0;
    let mut done = 0;
    while done < max_iter {
        let beta = norm(&r);
        rel = beta / b_norm;
        if rel <= rtol {
            break;
        }
        let m = restart.min(max_iter - done);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|a| a / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        // Hessenberg columns after Givens rotations.
        let mut hcols: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<(f64, f64)> = Vec::with_capacity(m);
        let mut g = vec![beta];
        for k in 0..m {
            let zk = precond(&v[k]);
            let mut w = apply(&zk);
            z.push(zk);
            let mut hk = Vec::with_capacity(k + 2);
            for vj in &v {
                let d = dot(&w, vj);
                axpy(&mut w, -d, vj);
                hk.push(d);
            }
            let wn = norm(&w);
            hk.push(wn);
            for (j, &(c, s)) in cs.iter().enumerate() {
                let (a, bb) = (hk[j], hk[j + 1]);
                hk[j] = c * a + s * bb;
                hk[j + 1] = -s * a + c * bb;
            }
            let (a, bb) = (hk[k], hk[k + 1]);
            let rho = a.hypot(bb);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (a / rho, bb / rho) };
            hk[k] = rho;
            hk[k + 1] = 0.0;
            cs.push((c, s));
            let gk = g[k];
            g[k] = c * gk;
            g.push(-s * gk);
            hcols.push(hk);
            done += 1;
            rel = g[k + 1].abs() / b_norm;
            if rel <= rtol || wn == 0.0 || k + 1 == m {
                break;
            }
            v.push(w.iter().map(|a| a / wn).collect());
        }
        // Back substitution on the triangular system.
        let kk = hcols.len();
        let mut y = vec![0.0; kk];
        for i in (0..kk).rev() {
            let mut s = g[i];
            for j in i + 1..kk {
                s -= hcols[j][i] * y[j];
            }
            y[i] = if hcols[i][i] == 0.0 { 0.0 } else { s / hcols[i][i] };
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(&mut x, *yj, &z[j]);
        }
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        rel = norm(&r) / b_norm;
        if rel <= rtol {
            break;
        }
    }
    (x, rel)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

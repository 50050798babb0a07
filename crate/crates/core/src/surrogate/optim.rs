//! Small unconstrained minimizers used for likelihood maximization.

/// Result of a local minimization.
#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_norm: f64,
    /// False when the line search broke down before a stationarity test passed.
    pub clean_exit: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// BFGS with an Armijo backtracking line search. `f` returns value and gradient;
/// non-finite values are treated as infeasible.
pub fn bfgs<F>(f: F, x0: &[f64], max_iters: usize, gtol: f64) -> Minimum
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut evals = 1;
    if n == 0 || !fx.is_finite() {
        return Minimum {
            x,
            value: fx,
            iterations: 0,
            evaluations: evals,
            grad_norm: 0.0,
            clean_exit: n == 0,
        };
    }
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut clean = false;
    let mut stall = 0;
    let mut it = 0;
    while it < max_iters {
        if inf_norm(&g) < gtol {
            clean = true;
            break;
        }
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            // lost descent; restart from steepest descent
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
        }
        // cap the first trial step
        let dn = inf_norm(&d);
        let mut step = if dn > 2.0 { 2.0 / dn } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (fn_, gn) = f(&xn);
            evals += 1;
            if fn_.is_finite() && fn_ <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        let improvement = fx - fn_;
        x = xn;
        g = gn;
        let prev = fx;
        fx = fn_;
        it += 1;
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &yv)).collect();
            let yhy = dot(&yv, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        if improvement <= 1e-12 * (1.0 + prev.abs()) {
            stall += 1;
            if stall >= 3 {
                clean = true;
                break;
            }
        } else {
            stall = 0;
        }
    }
    Minimum {
        grad_norm: inf_norm(&g),
        x,
        value: fx,
        iterations: it,
        evaluations: evals,
        clean_exit: clean,
    }
}

/// Hooke-Jeeves pattern search (value only).
pub fn pattern_search<F>(f: F, x0: &[f64], f0: f64, step0: f64, min_step: f64, max_evals: usize) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut base = x0.to_vec();
    let mut fbase = f0;
    let mut step = step0;
    let mut evals = 0;
    let mut it = 0;
    let explore = |center: &[f64], fc: f64, step: f64, evals: &mut usize| -> (Vec<f64>, f64) {
        let mut x = center.to_vec();
        let mut fx = fc;
        for i in 0..n {
            for dir in [1.0, -1.0] {
                let old = x[i];
                x[i] = old + dir * step;
                let v = f(&x);
                *evals += 1;
                if v.is_finite() && v < fx {
                    fx = v;
                    break;
                }
                x[i] = old;
            }
        }
        (x, fx)
    };
    while step > min_step && evals < max_evals {
        it += 1;
        let (x1, f1) = explore(&base, fbase, step, &mut evals);
        if f1 < fbase {
            // pattern move
            let mut b_old = base.clone();
            base = x1;
            fbase = f1;
            loop {
                let trial: Vec<f64> = base.iter().zip(&b_old).map(|(a, b)| 2.0 * a - b).collect();
                let ft = f(&trial);
                evals += 1;
                let (x2, f2) = explore(&trial, if ft.is_finite() { ft } else { f64::INFINITY }, step, &mut evals);
                if f2 < fbase && evals < max_evals {
                    b_old = std::mem::replace(&mut base, x2);
                    fbase = f2;
                } else {
                    break;
                }
            }
        } else {
            step *= 0.5;
        }
    }
    Minimum {
        x: base,
        value: fbase,
        iterations: it,
        evaluations: evals,
        grad_norm: f64::NAN,
        clean_exit: step <= min_step,
    }
}

//! Box-constrained quasi-Newton minimization.
//!
//! A projected L-BFGS variant: the two-loop direction is masked at active
//! bounds and every trial point is clipped back into the box. Good enough
//! for the small, smooth problems solved here (GP hyperparameters).

use std::collections::VecDeque;

const MEMORY: usize = 6;
const ARMIJO: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

fn clip(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mask_active(d: &mut [f64], x: &[f64], lo: &[f64], hi: &[f64]) {
    for i in 0..d.len() {
        if (x[i] <= lo[i] && d[i] < 0.0) || (x[i] >= hi[i] && d[i] > 0.0) {
            d[i] = 0.0;
        }
    }
}

fn two_loop(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    if let Some((s, y)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y), (a, rho)) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `f` over the box `[lo, hi]`. `f` returns `None` where it is undefined;
/// such points are treated as +∞ during the line search.
pub fn minimize_box<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], max_iter: usize) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    clip(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return None;
    }
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(MEMORY);
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut d = if memory.is_empty() {
            let scale = 1.0 / g.iter().map(|v| v.abs()).fold(1.0, f64::max);
            g.iter().map(|v| -v * scale).collect()
        } else {
            two_loop(&g, &memory)
        };
        mask_active(&mut d, &x, lo, hi);
        if dot(&g, &d) >= 0.0 {
            memory.clear();
            let scale = 1.0 / g.iter().map(|v| v.abs()).fold(1.0, f64::max);
            d = g.iter().map(|v| -v * scale).collect();
            mask_active(&mut d, &x, lo, hi);
        }
        let slope = dot(&g, &d);
        if slope > -1e-14 {
            break;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            clip(&mut trial, lo, hi);
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if moved.iter().all(|m| *m == 0.0) {
                break;
            }
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && ft <= fx + ARMIJO * dot(&g, &moved) {
                    accepted = Some((trial, ft, gt, moved));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((trial, ft, gt, s)) = accepted else {
            if memory.is_empty() {
                break;
            }
            memory.clear();
            continue;
        };
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let improvement = fx - ft;
        x = trial;
        fx = ft;
        g = gt;
        if dot(&s, &y) > 1e-12 {
            if memory.len() == MEMORY {
                memory.pop_front();
            }
            memory.push_back((s, y));
        }

        let mut pg = g.clone();
        mask_active(&mut pg, &x, lo, hi);
        let pg_norm = pg.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if improvement.abs() <= 1e-10 * (1.0 + fx.abs()) || pg_norm < 1e-7 {
            break;
        }
    }
    Some(Minimum {
        x,
        value: fx,
        iterations,
    })
}

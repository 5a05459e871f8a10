//! One NUTS transition: multinomial sampling over a doubling trajectory with the
//! generalized no-U-turn criterion checked across every subtree merge.

use super::LogDensity;
use crate::special::log_add_exp;
use rand::Rng;
use rand_distr::StandardNormal;

const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl Point {
    pub fn new<T: LogDensity + ?Sized>(target: &T, z: Vec<f64>) -> Self {
        let mut grad = vec![0.0; z.len()];
        let logp = target.log_density_and_grad(&z, &mut grad);
        Self { p: vec![0.0; z.len()], z, grad, logp }
    }
}

/// Diagonal-metric Hamiltonian system.
pub(crate) struct Hamiltonian<'a, T: LogDensity + ?Sized> {
    pub target: &'a T,
    pub inv_metric: &'a [f64],
}

impl<T: LogDensity + ?Sized> Hamiltonian<'_, T> {
    pub fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    pub fn energy(&self, pt: &Point) -> f64 {
        let h = -pt.logp + self.kinetic(&pt.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    pub fn sample_momentum<R: Rng>(&self, pt: &mut Point, rng: &mut R) {
        for (p, m) in pt.p.iter_mut().zip(self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    fn sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(self.inv_metric).map(|(p, m)| p * m).collect()
    }

    pub fn leapfrog(&self, pt: &mut Point, eps: f64) {
        for (p, g) in pt.p.iter_mut().zip(&pt.grad) {
            *p += 0.5 * eps * g;
        }
        for ((z, p), m) in pt.z.iter_mut().zip(&pt.p).zip(self.inv_metric) {
            *z += eps * m * p;
        }
        pt.logp = self.target.log_density_and_grad(&pt.z, &mut pt.grad);
        if pt.logp == f64::NEG_INFINITY {
            return;
        }
        for (p, g) in pt.p.iter_mut().zip(&pt.grad) {
            *p += 0.5 * eps * g;
        }
    }
}

/// Momentum and sharp momentum at one end of a trajectory segment.
#[derive(Debug, Clone)]
struct End {
    p: Vec<f64>,
    sharp: Vec<f64>,
}

struct Subtree {
    propose: Point,
    log_w: f64,
    rho: Vec<f64>,
    /// End adjacent to where the subtree started.
    near: End,
    far: End,
}

fn no_u_turn(sharp_minus: &[f64], sharp_plus: &[f64], rho: &[f64]) -> bool {
    let a: f64 = sharp_plus.iter().zip(rho).map(|(x, y)| x * y).sum();
    let b: f64 = sharp_minus.iter().zip(rho).map(|(x, y)| x * y).sum();
    a > 0.0 && b > 0.0
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
    pub n_leapfrog: usize,
    pub energy: f64,
}

struct Builder<'a, 'b, T: LogDensity + ?Sized, R: Rng> {
    ham: &'a Hamiltonian<'b, T>,
    rng: &'a mut R,
    eps: f64,
    h0: f64,
    n_leapfrog: usize,
    sum_metro: f64,
    divergent: bool,
}

impl<T: LogDensity + ?Sized, R: Rng> Builder<'_, '_, T, R> {
    /// Extend from `edge` by `2^depth` leapfrog steps in direction `dir`; `None`
    /// when the subtree diverged or contains a U-turn.
    fn build(&mut self, edge: &mut Point, depth: usize, dir: f64) -> Option<Subtree> {
        if depth == 0 {
            self.ham.leapfrog(edge, dir * self.eps);
            self.n_leapfrog += 1;
            let h = self.ham.energy(edge);
            let delta = self.h0 - h;
            self.sum_metro += if delta > 0.0 { 1.0 } else { delta.exp() };
            if -delta > MAX_DELTA_H || edge.logp == f64::NEG_INFINITY {
                self.divergent = true;
                return None;
            }
            let end = End { p: edge.p.clone(), sharp: self.ham.sharp(&edge.p) };
            return Some(Subtree { propose: edge.clone(), log_w: delta, rho: edge.p.clone(), near: end.clone(), far: end });
        }
        let first = self.build(edge, depth - 1, dir)?;
        let second = self.build(edge, depth - 1, dir)?;
        let log_w = log_add_exp(first.log_w, second.log_w);
        let take_second = self.rng.random::<f64>() < (second.log_w - log_w).exp();
        let rho = add(&first.rho, &second.rho);
        let ok = no_u_turn(&first.near.sharp, &second.far.sharp, &rho)
            && no_u_turn(&first.near.sharp, &second.near.sharp, &add(&first.rho, &second.near.p))
            && no_u_turn(&first.far.sharp, &second.far.sharp, &add(&second.rho, &first.far.p));
        if !ok {
            return None;
        }
        Some(Subtree { propose: if take_second { second.propose } else { first.propose }, log_w, rho, near: first.near, far: second.far })
    }
}

/// Draw a new state starting from `current` (whose gradient must be valid).
pub(crate) fn transition<T: LogDensity + ?Sized, R: Rng>(
    ham: &Hamiltonian<'_, T>,
    current: &Point,
    eps: f64,
    max_depth: usize,
    rng: &mut R,
) -> (Point, TransitionStats) {
    let mut start = current.clone();
    ham.sample_momentum(&mut start, rng);
    let h0 = ham.energy(&start);

    let mut fwd = start.clone();
    let mut bck = start.clone();
    let mut rho = start.p.clone();
    let start_end = End { p: start.p.clone(), sharp: ham.sharp(&start.p) };
    let mut fwd_end = start_end.clone();
    let mut bck_end = start_end;
    let mut log_w = 0.0;
    let mut sample = start;
    let mut depth = 0;

    let mut b = Builder { ham, rng, eps, h0, n_leapfrog: 0, sum_metro: 0.0, divergent: false };
    while depth < max_depth {
        let forward = b.rng.random::<f64>() > 0.5;
        let sub = if forward { b.build(&mut fwd, depth, 1.0) } else { b.build(&mut bck, depth, -1.0) };
        let Some(sub) = sub else {
            break;
        };
        depth += 1;
        if sub.log_w > log_w || b.rng.random::<f64>() < (sub.log_w - log_w).exp() {
            sample = sub.propose.clone();
        }
        log_w = log_add_exp(log_w, sub.log_w);

        // `old_near` is the end of the previous trajectory adjacent to the new subtree
        let (old_near, old_far) = if forward { (&fwd_end, &bck_end) } else { (&bck_end, &fwd_end) };
        let total = add(&rho, &sub.rho);
        let ok = no_u_turn(&old_far.sharp, &sub.far.sharp, &total)
            && no_u_turn(&old_far.sharp, &sub.near.sharp, &add(&rho, &sub.near.p))
            && no_u_turn(&old_near.sharp, &sub.far.sharp, &add(&sub.rho, &old_near.p));
        rho = total;
        if forward {
            fwd_end = sub.far;
        } else {
            bck_end = sub.far;
        }
        if !ok {
            break;
        }
    }
    let stats = TransitionStats {
        accept_stat: if b.n_leapfrog > 0 { b.sum_metro / b.n_leapfrog as f64 } else { 0.0 },
        divergent: b.divergent,
        depth,
        n_leapfrog: b.n_leapfrog,
        energy: ham.energy(&sample),
    };
    (sample, stats)
}

/// Step-size heuristic: double or halve until the one-step acceptance crosses 0.8.
pub(crate) fn initial_step_size<T: LogDensity + ?Sized, R: Rng>(
    ham: &Hamiltonian<'_, T>,
    current: &Point,
    mut eps: f64,
    rng: &mut R,
) -> f64 {
    let log_target = 0.8f64.ln();
    let trial = |eps: f64, rng: &mut R| {
        let mut pt = current.clone();
        ham.sample_momentum(&mut pt, rng);
        let h0 = ham.energy(&pt);
        ham.leapfrog(&mut pt, eps);
        h0 - ham.energy(&pt)
    };
    let first = trial(eps, rng);
    let up = first > log_target;
    for _ in 0..100 {
        eps = if up { 2.0 * eps } else { 0.5 * eps };
        let delta = trial(eps, rng);
        if (up && !(delta > log_target)) || (!up && !(delta < log_target)) {
            break;
        }
        if !(eps > 1e-12 && eps < 1e7) {
            break;
        }
    }
    eps.clamp(1e-12, 1e7)
}

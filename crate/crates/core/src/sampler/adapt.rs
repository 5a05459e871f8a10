//! Warmup adaptation: dual averaging of the step size and windowed estimation of a
//! diagonal inverse metric.

/// Nesterov dual averaging toward a target acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    delta: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(delta: f64, step_size: f64) -> Self {
        let mut da = Self { delta, gamma: 0.05, t0: 10.0, kappa: 0.75, mu: 0.0, counter: 0.0, s_bar: 0.0, x_bar: 0.0 };
        da.restart(step_size);
        da
    }

    pub fn restart(&mut self, step_size: f64) {
        self.mu = (10.0 * step_size).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Feed one acceptance statistic; returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        let stat = if accept_stat.is_nan() { 0.0 } else { accept_stat.min(1.0) };
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    /// The averaged step size used after warmup.
    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford running variance per coordinate.
#[derive(Debug, Clone)]
pub struct RunningVariance {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Variance shrunk toward a small constant, as a regularized inverse metric.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn reset(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Schedule of warmup windows: a fast initial buffer, slow metric windows that
/// double in length, and a fast terminal buffer.
#[derive(Debug, Clone)]
pub struct WindowSchedule {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window_end: usize,
}

impl WindowSchedule {
    pub fn new(warmup: usize, init_buffer: usize, term_buffer: usize, base_window: usize) -> Self {
        let (init_buffer, term_buffer, base_window) = if init_buffer + base_window + term_buffer > warmup {
            let init = (0.15 * warmup as f64) as usize;
            let term = (0.1 * warmup as f64) as usize;
            (init, term, warmup.saturating_sub(init + term))
        } else {
            (init_buffer, term_buffer, base_window)
        };
        Self { warmup, init_buffer, term_buffer, window_size: base_window, next_window_end: init_buffer + base_window }
    }

    /// Whether iteration `i` (0-based) feeds the metric estimator.
    pub fn in_slow_window(&self, i: usize) -> bool {
        self.warmup >= 20 && i >= self.init_buffer && i < self.warmup - self.term_buffer
    }

    /// Whether a slow window closes after iteration `i`; advances the schedule.
    pub fn window_closes(&mut self, i: usize) -> bool {
        if !self.in_slow_window(i) || i + 1 != self.next_window_end {
            return false;
        }
        self.window_size *= 2;
        let slow_end = self.warmup - self.term_buffer;
        let mut next = i + 1 + self.window_size;
        // absorb a final window that would not fit
        if next + 2 * self.window_size > slow_end {
            next = slow_end;
        }
        self.next_window_end = next;
        true
    }
}

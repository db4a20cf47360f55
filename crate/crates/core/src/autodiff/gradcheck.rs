use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// A scalar function of named parameter groups, in 64-bit precision.
pub trait Objective {
    /// `(name, number of coordinates)` for each group.
    fn layers(&self) -> Vec<(String, usize)>;
    fn get(&self, layer: usize, index: usize) -> f64;
    fn set(&mut self, layer: usize, index: usize, value: f64);
    fn loss(&mut self) -> f64;
    /// Analytic gradient, flattened per group in the same order as `layers`.
    fn gradient(&mut self) -> Vec<Vec<f64>>;
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub layers: Vec<LayerCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.layers.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }
}

/// Denominator floor: central differences of an O(1) loss carry rounding
/// noise near `ε·|L|/h ≈ 1e-11`, which swamps gradients far below this.
const SCALE_FLOOR: f64 = 1e-6;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    diff / analytic.abs().max(numeric.abs()).max(SCALE_FLOOR)
}

/// Central-difference steps tried, as multiples of `1 + |θ|`.
const STEPS: [f64; 4] = [1e-5, 1e-6, 1e-7, 1e-8];
/// Relative agreement at which two successive estimates count as converged.
const AGREEMENT: f64 = 1e-6;

/// Central difference on one coordinate. A relu6 kink inside `[θ − h, θ + h]`
/// anywhere in a large graph spoils the estimate, so the step shrinks
/// tenfold until two successive estimates agree to within [`AGREEMENT`] plus
/// the rounding noise of the smaller step.
fn numeric_derivative(objective: &mut dyn Objective, layer: usize, index: usize) -> f64 {
    let theta = objective.get(layer, index);
    let mut central = |step: f64| {
        let h = step * (1.0 + theta.abs());
        objective.set(layer, index, theta + h);
        let up = objective.loss();
        objective.set(layer, index, theta - h);
        let down = objective.loss();
        objective.set(layer, index, theta);
        ((up - down) / (2.0 * h), 0.5 * (up + down).abs(), h)
    };
    let (mut prev, _, _) = central(STEPS[0]);
    for &step in &STEPS[1..] {
        let (next, loss, h) = central(step);
        let noise = 10.0 * f64::EPSILON * (1.0 + loss) / h;
        if (prev - next).abs() <= AGREEMENT * prev.abs().max(next.abs()) + noise {
            return prev;
        }
        prev = next;
    }
    prev
}

/// Compares analytic gradients with central differences on up to
/// `coords_per_layer` random coordinates of every group (all of them when
/// the group is smaller). Steps start at `1e-5·(1 + |θ|)`.
pub fn gradient_check(objective: &mut dyn Objective, coords_per_layer: usize, seed: u64) -> GradCheckReport {
    let analytic = objective.gradient();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for (li, (name, n)) in objective.layers().into_iter().enumerate() {
        let picks: Vec<usize> =
            if n <= coords_per_layer { (0..n).collect() } else { sample(&mut rng, n, coords_per_layer).into_vec() };
        let mut check = LayerCheck { name, checked: picks.len(), max_rel_error: 0.0, max_abs_error: 0.0 };
        for i in picks {
            let numeric = numeric_derivative(objective, li, i);
            let a = analytic[li][i];
            check.max_rel_error = check.max_rel_error.max(relative_error(a, numeric));
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
        }
        layers.push(check);
    }
    GradCheckReport { layers }
}

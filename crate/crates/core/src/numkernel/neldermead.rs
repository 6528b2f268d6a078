use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Options for the multi-start Nelder-Mead simplex search.
#[derive(Debug, Clone)]
pub struct NmOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
    pub init_step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            tol: 1e-8,
            restarts: 5,
            init_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    /// False when some start hit max_iter before the simplex collapsed;
    /// the best point found is still returned.
    pub converged: bool,
}

/// Derivative-free minimization. Runs once from `x0` plus `restarts` jittered
/// starts (deterministic jitter) and keeps the best result.
pub fn nelder_mead<F>(f: F, x0: &DVector<f64>, opts: &NmOptions) -> NmResult
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut jitter = ChaCha12Rng::seed_from_u64(0x4e4d_5345_4544); // fixed: runs are reproducible
    let mut best: Option<NmResult> = None;
    for restart in 0..=opts.restarts {
        let start = if restart == 0 {
            x0.clone()
        } else {
            DVector::from_fn(x0.len(), |i, _| {
                x0[i] + opts.init_step * (restart as f64) * jitter.gen_range(-1.0..1.0)
            })
        };
        let run = single_run(&f, &start, opts);
        best = Some(match best {
            Some(b) if b.value <= run.value => b,
            _ => run,
        });
    }
    best.unwrap()
}

fn single_run<F>(f: &F, x0: &DVector<f64>, opts: &NmOptions) -> NmResult
where
    F: Fn(&DVector<f64>) -> f64,
{
    let d = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<DVector<f64>> = Vec::with_capacity(d + 1);
    simplex.push(x0.clone());
    for i in 0..d {
        let mut v = x0.clone();
        v[i] += if x0[i].abs() > 1e-12 {
            0.05 * x0[i].abs().max(opts.init_step)
        } else {
            opts.init_step
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        let sorted: Vec<DVector<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let sorted_vals: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = sorted;
        values = sorted_vals;

        let diameter = simplex[1..]
            .iter()
            .map(|x| (x - &simplex[0]).norm())
            .fold(0.0_f64, f64::max);
        let spread = values[d] - values[0];
        if diameter < opts.tol && spread.abs() < opts.tol {
            converged = true;
            break;
        }

        let centroid = simplex[..d]
            .iter()
            .fold(DVector::zeros(d), |acc, x| acc + x)
            / d as f64;

        let reflected = &centroid + (&centroid - &simplex[d]) * alpha;
        let f_r = f(&reflected);
        if f_r < values[0] {
            let expanded = &centroid + (&reflected - &centroid) * gamma;
            let f_e = f(&expanded);
            if f_e < f_r {
                simplex[d] = expanded;
                values[d] = f_e;
            } else {
                simplex[d] = reflected;
                values[d] = f_r;
            }
            continue;
        }
        if f_r < values[d - 1] {
            simplex[d] = reflected;
            values[d] = f_r;
            continue;
        }
        let contracted = &centroid + (&simplex[d] - &centroid) * rho;
        let f_c = f(&contracted);
        if f_c < values[d] {
            simplex[d] = contracted;
            values[d] = f_c;
            continue;
        }
        for i in 1..=d {
            simplex[i] = &simplex[0] + (&simplex[i] - &simplex[0]) * sigma;
            values[i] = f(&simplex[i]);
        }
    }

    let mut best = 0;
    for i in 1..=d {
        if values[i] < values[best] {
            best = i;
        }
    }
    NmResult {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}

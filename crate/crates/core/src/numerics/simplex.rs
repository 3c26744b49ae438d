use super::NumericsError;

/// Nelder-Mead settings. Coefficients follow the usual reflection / expansion /
/// contraction / shrink scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptions {
    /// Stop once every vertex lies within this distance of the best vertex.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Offset of the initial vertices from the start point, per coordinate.
    pub initial_step: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iter: 5_000,
            initial_step: 0.1,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Vertex {
    x: Vec<f64>,
    // Cost is the negated objective; non-finite objective values map to +inf.
    cost: f64,
}

/// Maximize `objective` with the Nelder-Mead simplex method.
///
/// Returns the best vertex once the simplex diameter falls below
/// `options.tolerance` or `options.max_iter` iterations elapse. The objective must
/// be finite at `start`; non-finite values met later are treated as `-inf`.
pub fn nelder_mead<F>(mut objective: F, start: &[f64], options: &SimplexOptions) -> Result<SimplexResult, NumericsError>
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = start.len();
    if dim == 0 {
        return Err(NumericsError::InvalidInput("nelder_mead needs at least one parameter".into()));
    }
    let f0 = objective(start);
    if !f0.is_finite() {
        return Err(NumericsError::InvalidInput(format!(
            "objective is not finite at the start point ({f0})"
        )));
    }
    let mut cost = |x: &[f64]| {
        let v = objective(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex = Vec::with_capacity(dim + 1);
    simplex.push(Vertex {
        x: start.to_vec(),
        cost: -f0,
    });
    for i in 0..dim {
        let mut x = start.to_vec();
        x[i] += options.initial_step;
        let c = cost(&x);
        simplex.push(Vertex { x, cost: c });
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.cost.total_cmp(&b.cost));
        if diameter(&simplex) < options.tolerance {
            converged = true;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }
        iterations += 1;

        let worst = dim;
        let centroid = centroid(&simplex[..worst]);
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst].x)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(options.reflection);
        let fr = cost(&xr);
        if fr < simplex[0].cost {
            let xe = along(options.reflection * options.expansion);
            let fe = cost(&xe);
            simplex[worst] = if fe < fr { Vertex { x: xe, cost: fe } } else { Vertex { x: xr, cost: fr } };
            continue;
        }
        if fr < simplex[worst - 1].cost {
            simplex[worst] = Vertex { x: xr, cost: fr };
            continue;
        }
        let (xc, fc, accept) = if fr < simplex[worst].cost {
            let xc = along(options.reflection * options.contraction);
            let fc = cost(&xc);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = along(-options.contraction);
            let fc = cost(&xc);
            let ok = fc < simplex[worst].cost;
            (xc, fc, ok)
        };
        if accept {
            simplex[worst] = Vertex { x: xc, cost: fc };
            continue;
        }
        let best = simplex[0].x.clone();
        for v in simplex.iter_mut().skip(1) {
            for (xi, bi) in v.x.iter_mut().zip(&best) {
                *xi = bi + options.shrink * (*xi - bi);
            }
            v.cost = cost(&v.x);
        }
    }

    let best = &simplex[0];
    Ok(SimplexResult {
        argmax: best.x.clone(),
        value: -best.cost,
        iterations,
        converged,
    })
}

fn centroid(vertices: &[Vertex]) -> Vec<f64> {
    let n = vertices.len() as f64;
    let dim = vertices[0].x.len();
    (0..dim)
        .map(|j| vertices.iter().map(|v| v.x[j]).sum::<f64>() / n)
        .collect()
}

fn diameter(simplex: &[Vertex]) -> f64 {
    let best = &simplex[0].x;
    simplex[1..]
        .iter()
        .map(|v| {
            v.x.iter()
                .zip(best)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

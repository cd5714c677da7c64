//! Post-hoc verification: comparison with cones, Lipschitz seminorms and
//! the AMLE surrogate, conical barriers, and the infinity eigenvalue via
//! the L-infinity variational formula.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vector;
use crate::grid::{barrier_scheme_value_lower, barrier_scheme_value_sampled, Grid};
use crate::norm::{FinslerNorm, NormSpec};

/// A comparison-with-cones probe: a sub-box of nodes, an exterior vertex,
/// a slope, and an orientation.
#[derive(Debug, Clone)]
pub struct ConeProbe {
    pub id: usize,
    /// Inclusive node ranges `i0..=i1`, `j0..=j1` of the closed sub-box.
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
    pub vertex: Vector,
    pub lambda: f64,
    /// `true`: comparison from above (max of `u - lambda phi(. - v)`).
    pub above: bool,
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub id: usize,
    /// Interior excess over the sub-box boundary; cone comparison holds
    /// when this is at most the tolerance.
    pub delta: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Draws random valid probes: sub-boxes of at least 3 nodes per side with
/// vertices strictly outside them.
pub fn seeded_probes(grid: &Grid, count: usize, seed: u64) -> Vec<ConeProbe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(count);
    let mut id = 0;
    while probes.len() < count {
        let i0 = rng.gen_range(0..grid.nx - 3);
        let i1 = rng.gen_range(i0 + 2..grid.nx);
        let j0 = rng.gen_range(0..grid.ny - 3);
        let j1 = rng.gen_range(j0 + 2..grid.ny);
        let lo = grid.node(i0, j0);
        let hi = grid.node(i1, j1);
        // vertex outside the closed sub-box
        let vertex = loop {
            let v = crate::geom::vec2(
                rng.gen_range(grid.xmin[0] - 1.0..grid.xmax[0] + 1.0),
                rng.gen_range(grid.xmin[1] - 1.0..grid.xmax[1] + 1.0),
            );
            if v[0] < lo[0] - 1e-12
                || v[0] > hi[0] + 1e-12
                || v[1] < lo[1] - 1e-12
                || v[1] > hi[1] + 1e-12
            {
                break v;
            }
        };
        probes.push(ConeProbe {
            id,
            i0,
            i1,
            j0,
            j1,
            vertex,
            lambda: rng.gen_range(0.2..5.0),
            above: id % 2 == 0,
        });
        id += 1;
    }
    probes
}

/// Checks the comparison-with-cones property of a grid field on each probe:
/// the extreme of `u -+ lambda phi(+-(x - v))` over the closed sub-box must
/// be attained on its node boundary, up to `tol`.
pub fn cone_comparison_check(
    grid: &Grid,
    field: &[f64],
    norm: &FinslerNorm,
    probes: &[ConeProbe],
    tol: f64,
) -> Result<Vec<ProbeOutcome>> {
    if field.len() != grid.len() {
        return Err(Error::Config("field length does not match the grid".into()));
    }
    let outcomes: Vec<ProbeOutcome> = probes
        .par_iter()
        .map(|p| {
            let mut all = f64::NEG_INFINITY;
            let mut boundary = f64::NEG_INFINITY;
            for j in p.j0..=p.j1 {
                for i in p.i0..=p.i1 {
                    let x = grid.node(i, j);
                    let w = if p.above {
                        field[grid.idx(i, j)] - p.lambda * norm.eval(&(x - p.vertex))
                    } else {
                        -(field[grid.idx(i, j)] + p.lambda * norm.eval(&(p.vertex - x)))
                    };
                    all = all.max(w);
                    if i == p.i0 || i == p.i1 || j == p.j0 || j == p.j1 {
                        boundary = boundary.max(w);
                    }
                }
            }
            let delta = all - boundary;
            ProbeOutcome {
                id: p.id,
                delta,
                threshold: tol,
                pass: delta <= tol,
            }
        })
        .collect();
    Ok(outcomes)
}

/// Max of `(u(x) - u(y)) / phi(x - y)` over sampled ordered node pairs in
/// the region, plus an exhaustive pass over axis and diagonal neighbors.
pub fn lipschitz_seminorm(
    grid: &Grid,
    field: &[f64],
    region: (usize, usize, usize, usize),
    norm: &FinslerNorm,
    pair_budget: usize,
    seed: u64,
) -> f64 {
    let (i0, i1, j0, j1) = region;
    let mut best = 0.0_f64;
    // exhaustive nearest neighbors (both orientations via symmetry of the
    // pair scan)
    let neigh = [(1i64, 0i64), (0, 1), (1, 1), (1, -1)];
    for j in j0..=j1 {
        for i in i0..=i1 {
            let x = grid.node(i, j);
            let ux = field[grid.idx(i, j)];
            for &(di, dj) in &neigh {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii < i0 as i64 || ii > i1 as i64 || jj < j0 as i64 || jj > j1 as i64 {
                    continue;
                }
                let y = grid.node(ii as usize, jj as usize);
                let uy = field[grid.idx(ii as usize, jj as usize)];
                let fwd = norm.eval(&(x - y));
                let bwd = norm.eval(&(y - x));
                if fwd > 0.0 {
                    best = best.max((ux - uy) / fwd);
                }
                if bwd > 0.0 {
                    best = best.max((uy - ux) / bwd);
                }
            }
        }
    }
    // random long-range pairs
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pair_budget {
        let ia = rng.gen_range(i0..=i1);
        let ja = rng.gen_range(j0..=j1);
        let ib = rng.gen_range(i0..=i1);
        let jb = rng.gen_range(j0..=j1);
        if ia == ib && ja == jb {
            continue;
        }
        let xa = grid.node(ia, ja);
        let xb = grid.node(ib, jb);
        let ua = field[grid.idx(ia, ja)];
        let ub = field[grid.idx(ib, jb)];
        let d = norm.eval(&(xa - xb));
        if d > 0.0 {
            best = best.max((ua - ub) / d);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct AmleOutcome {
    pub id: usize,
    pub lip_inside: f64,
    pub lip_boundary: f64,
    pub excess: f64,
    pub pass: bool,
}

/// AMLE surrogate: on each sub-box, the Lipschitz seminorm over the closed
/// box must not exceed the seminorm of the boundary restriction by more
/// than `tol`.
pub fn amle_check(
    grid: &Grid,
    field: &[f64],
    norm: &FinslerNorm,
    subboxes: &[(usize, usize, usize, usize)],
    tol: f64,
    pair_budget: usize,
    seed: u64,
) -> Vec<AmleOutcome> {
    subboxes
        .iter()
        .enumerate()
        .map(|(id, &(i0, i1, j0, j1))| {
            // boundary pairs, exhaustive
            let mut boundary_nodes = Vec::new();
            for j in j0..=j1 {
                for i in i0..=i1 {
                    if i == i0 || i == i1 || j == j0 || j == j1 {
                        boundary_nodes.push((i, j));
                    }
                }
            }
            let mut lip_bd = 0.0_f64;
            for a in 0..boundary_nodes.len() {
                for b in 0..boundary_nodes.len() {
                    if a == b {
                        continue;
                    }
                    let (ia, ja) = boundary_nodes[a];
                    let (ib, jb) = boundary_nodes[b];
                    let d = norm.eval(&(grid.node(ia, ja) - grid.node(ib, jb)));
                    if d > 0.0 {
                        lip_bd = lip_bd
                            .max((field[grid.idx(ia, ja)] - field[grid.idx(ib, jb)]) / d);
                    }
                }
            }
            let lip_in = lipschitz_seminorm(grid, field, (i0, i1, j0, j1), norm, pair_budget, seed)
                .max(lip_bd);
            AmleOutcome {
                id,
                lip_inside: lip_in,
                lip_boundary: lip_bd,
                excess: lip_in - lip_bd,
                pass: lip_in - lip_bd <= tol,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EigenReport {
    /// The variational estimate `Lambda = 1 / max rho`.
    pub lambda: f64,
    pub max_rho: f64,
    pub argmax: (usize, usize),
    /// The normalized extremal field `rho / max rho` (one value per node).
    pub extremal: Vec<f64>,
    /// Admissibility: seminorm of the extremal field (should be about
    /// `Lambda`-scaled 1) and max boundary magnitude (exact zeros).
    pub extremal_seminorm: f64,
    pub max_boundary_value: f64,
    /// `phi*(grad rho_hat) - Lambda rho_hat` at the max node (central
    /// differences), reported as a residual probe of the eigen-equation.
    pub eigen_residual_at_max: f64,
}

/// Estimates the principal infinity eigenvalue of the box domain via the
/// variational formula: `rho` is the phi-distance to the node boundary and
/// `Lambda = 1 / max rho`.
pub fn eigenvalue_estimate(norm: &FinslerNorm, grid: &Grid) -> Result<EigenReport> {
    if norm.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            what: "eigenvalue estimate",
            dim: norm.dim(),
        });
    }
    let mut boundary = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if i == 0 || i == grid.nx - 1 || j == 0 || j == grid.ny - 1 {
                boundary.push(grid.node(i, j));
            }
        }
    }
    let rows: Vec<usize> = (0..grid.ny).collect();
    let rho_rows: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|&j| {
            let mut row = vec![0.0; grid.nx];
            for i in 0..grid.nx {
                let x = grid.node(i, j);
                if i == 0 || i == grid.nx - 1 || j == 0 || j == grid.ny - 1 {
                    row[i] = 0.0;
                } else {
                    row[i] = boundary
                        .iter()
                        .map(|y| norm.eval(&(x - *y)))
                        .fold(f64::INFINITY, f64::min);
                }
            }
            row
        })
        .collect();
    let mut rho = vec![0.0; grid.len()];
    for (j, row) in rho_rows.into_iter().enumerate() {
        rho[j * grid.nx..(j + 1) * grid.nx].copy_from_slice(&row);
    }
    let mut max_rho = 0.0;
    let mut argmax = (0, 0);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if rho[grid.idx(i, j)] > max_rho {
                max_rho = rho[grid.idx(i, j)];
                argmax = (i, j);
            }
        }
    }
    if max_rho <= 0.0 {
        return Err(Error::Domain("distance field vanishes identically".into()));
    }
    let lambda = 1.0 / max_rho;
    let extremal: Vec<f64> = rho.iter().map(|v| v / max_rho).collect();
    let seminorm = lipschitz_seminorm(
        grid,
        &rho,
        (0, grid.nx - 1, 0, grid.ny - 1),
        norm,
        20_000,
        17,
    );
    let mut max_bd = 0.0_f64;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if i == 0 || i == grid.nx - 1 || j == 0 || j == grid.ny - 1 {
                max_bd = max_bd.max(extremal[grid.idx(i, j)].abs());
            }
        }
    }
    // eigen-equation residual probe at the max point
    let (mi, mj) = argmax;
    let eigen_residual = if mi > 0 && mi < grid.nx - 1 && mj > 0 && mj < grid.ny - 1 {
        let gx = (extremal[grid.idx(mi + 1, mj)] - extremal[grid.idx(mi - 1, mj)]) / (2.0 * grid.h);
        let gy = (extremal[grid.idx(mi, mj + 1)] - extremal[grid.idx(mi, mj - 1)]) / (2.0 * grid.h);
        norm.dual_eval(&crate::geom::vec2(gx, gy)) - lambda * extremal[grid.idx(mi, mj)]
    } else {
        f64::NAN
    };
    Ok(EigenReport {
        lambda,
        max_rho,
        argmax,
        extremal,
        extremal_seminorm: seminorm,
        max_boundary_value: max_bd,
        eigen_residual_at_max: eigen_residual,
    })
}

#[derive(Debug, Clone)]
pub struct BarrierRow {
    pub eps: f64,
    /// Minimum over samples of the upper-barrier scheme value minus the
    /// `kappa`-scaled measured constant (pass: >= -tol).
    pub upper_margin: f64,
    /// Maximum over samples of the lower-barrier scheme value plus the
    /// `kappa`-scaled constant (pass: <= tol).
    pub lower_margin: f64,
    pub upper_min: f64,
    pub lower_max: f64,
    pub skipped: usize,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct BarrierReport {
    pub alpha: f64,
    pub rows: Vec<BarrierRow>,
    /// No sample flipped sign between consecutive eps levels.
    pub signs_stable: bool,
}

/// Checks the conical barriers `u_+ = phi(x)^alpha` (supersolution sign:
/// scheme value bounded below by `kappa C_+`) and `u_- = -phi(-x)^alpha`
/// (subsolution sign) on sampled points of `B_R` over an `eps` ladder.
pub fn barrier_check(
    norm: &FinslerNorm,
    alpha: f64,
    radius: f64,
    eps_list: &[f64],
    samples: usize,
    seed: u64,
    kappa: f64,
    tol: f64,
) -> Result<BarrierReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config("barrier exponent must lie in (0,1)".into()));
    }
    let dim = norm.dim();
    let inv = FinslerNorm::build(
        &NormSpec::Inverted {
            base: Box::new(norm.spec().clone()),
        },
        dim,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    while points.len() < samples {
        let mut x = Vector::zeros(dim);
        for i in 0..dim {
            x[i] = rng.gen_range(-radius..radius);
        }
        if x.norm2() <= radius && x.norm2() > 1e-3 {
            points.push(x);
        }
    }
    let eps_max = eps_list.iter().cloned().fold(0.0_f64, f64::max);
    let mut rows = Vec::new();
    let mut signs: Vec<Vec<(f64, f64)>> = Vec::new();
    for &eps in eps_list {
        let mut upper_margin = f64::INFINITY;
        let mut lower_margin = f64::NEG_INFINITY;
        let mut upper_min = f64::INFINITY;
        let mut lower_max = f64::NEG_INFINITY;
        let mut skipped = 0usize;
        let mut level_signs = Vec::new();
        for x in &points {
            // skip samples too close to the vertex relative to eps
            if norm.eval(x).min(inv.eval(x)) <= 1.5 * eps_max {
                skipped += 1;
                continue;
            }
            let s_up = barrier_scheme_value_sampled(norm, alpha, x, eps)?;
            let c_plus = alpha * (1.0 - alpha) * norm.eval(x).powf(alpha - 2.0);
            upper_margin = upper_margin.min(s_up - kappa * c_plus);
            upper_min = upper_min.min(s_up);
            let s_dn = barrier_scheme_value_lower(norm, alpha, x, eps)?;
            let c_minus = alpha * (1.0 - alpha) * inv.eval(x).powf(alpha - 2.0);
            lower_margin = lower_margin.max(s_dn + kappa * c_minus);
            lower_max = lower_max.max(s_dn);
            level_signs.push((s_up, s_dn));
        }
        rows.push(BarrierRow {
            eps,
            upper_margin,
            lower_margin,
            upper_min,
            lower_max,
            skipped,
            pass: upper_margin >= -tol && lower_margin <= tol,
        });
        signs.push(level_signs);
    }
    let mut signs_stable = true;
    for w in signs.windows(2) {
        for (a, b) in w[0].iter().zip(w[1].iter()) {
            if a.0.signum() != b.0.signum() || a.1.signum() != b.1.signum() {
                signs_stable = false;
            }
        }
    }
    Ok(BarrierReport {
        alpha,
        rows,
        signs_stable,
    })
}

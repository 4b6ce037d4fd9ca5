//! Presolve plus a primal-dual log-barrier method with equality-constrained Newton steps.

use log::{debug, trace};
use nalgebra::{DMatrix, DVector};

use super::{
    gradient_scale, kkt_residual, Certificate, ConvexInstance, ConvexSolution, KktPoint, Multipliers, RowLabel,
    Sense, SolveStatus, ENERGY_UNIT,
};
use crate::energy::EnergyTerm;
use crate::error::{Error, Result};
use crate::model::CacheState;

const PRESOLVE_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 400;
const T_GROWTH: f64 = 10.0;
const ARMIJO: f64 = 0.01;
const BACKTRACK: f64 = 0.5;
const TO_BOUNDARY: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowState {
    Active,
    Dropped,
    /// Row that fixed its variables to zero; the sign makes its live coefficients positive.
    Forcing(f64),
}

struct Presolved {
    fixed: Vec<bool>,
    state: Vec<RowState>,
    /// Forcing rows in the order they fired, with the variables each one fixed.
    forcing: Vec<(usize, Vec<usize>)>,
}

fn live_coeffs(coeffs: &[(usize, f64)], fixed: &[bool]) -> Vec<(usize, f64)> {
    let mut live: Vec<(usize, f64)> = coeffs.iter().copied().filter(|&(j, a)| a != 0.0 && !fixed[j]).collect();
    live.sort_by_key(|&(j, _)| j);
    live
}

fn presolve(inst: &ConvexInstance<'_>) -> std::result::Result<Presolved, Certificate> {
    let rows = &inst.rows;
    let mut fixed = vec![false; inst.num_vars()];
    let mut state = vec![RowState::Active; rows.len()];
    let mut forcing: Vec<(usize, Vec<usize>)> = Vec::new();
    let certificate = |r: usize, forcing: &[(usize, Vec<usize>)], reason: String| {
        let mut labels: Vec<RowLabel> = forcing
            .iter()
            .filter(|(_, vars)| rows[r].coeffs.iter().any(|(j, _)| vars.contains(j)))
            .map(|&(q, _)| rows[q].label)
            .collect();
        labels.push(rows[r].label);
        Certificate { rows: labels, reason }
    };

    loop {
        let mut changed = false;
        for (r, row) in rows.iter().enumerate() {
            if state[r] != RowState::Active {
                continue;
            }
            let live = live_coeffs(&row.coeffs, &fixed);
            let scale = 1.0 + row.rhs.abs() + live.iter().fold(0.0_f64, |m, &(_, a)| m.max(a.abs()));
            let tol = PRESOLVE_TOL * scale;
            if live.is_empty() {
                let ok = match row.sense {
                    Sense::Le => row.rhs >= -tol,
                    Sense::Eq => row.rhs.abs() <= tol,
                };
                if !ok {
                    return Err(certificate(r, &forcing, format!("{} cannot hold with every variable at zero", row.label)));
                }
                state[r] = RowState::Dropped;
                continue;
            }
            let all_pos = live.iter().all(|&(_, a)| a > 0.0);
            let all_neg = live.iter().all(|&(_, a)| a < 0.0);
            let sign = match (row.sense, all_pos, all_neg) {
                (Sense::Le, true, _) => 1.0,
                (Sense::Le, false, true) => {
                    if row.rhs >= -tol {
                        state[r] = RowState::Dropped;
                    }
                    continue;
                }
                (Sense::Eq, true, _) => 1.0,
                (Sense::Eq, false, true) => -1.0,
                _ => continue,
            };
            let rhs = sign * row.rhs;
            if rhs < -tol {
                return Err(certificate(
                    r,
                    &forcing,
                    format!("{} needs a negative combination of nonnegative variables", row.label),
                ));
            }
            if rhs <= tol {
                let vars: Vec<usize> = live.iter().map(|&(j, _)| j).collect();
                for &j in &vars {
                    fixed[j] = true;
                }
                state[r] = RowState::Forcing(sign);
                forcing.push((r, vars));
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // An inequality that coincides with an equality is implied by it.
    for (r, row) in rows.iter().enumerate() {
        if state[r] != RowState::Active || row.sense != Sense::Le {
            continue;
        }
        let live = live_coeffs(&row.coeffs, &fixed);
        let duplicate = rows.iter().enumerate().any(|(q, other)| {
            if state[q] != RowState::Active || other.sense != Sense::Eq {
                return false;
            }
            let other_live = live_coeffs(&other.coeffs, &fixed);
            let scale = 1.0 + row.rhs.abs();
            other_live.len() == live.len()
                && (other.rhs - row.rhs).abs() <= PRESOLVE_TOL * scale
                && live
                    .iter()
                    .zip(&other_live)
                    .all(|(&(i, a), &(j, b))| i == j && (a - b).abs() <= PRESOLVE_TOL * (1.0 + a.abs()))
        });
        if duplicate {
            state[r] = RowState::Dropped;
        }
    }

    Ok(Presolved { fixed, state, forcing })
}

/// A strictly interior point of the presolved problem, built by filling
/// every cumulative constraint halfway at each slot and closing it on the
/// last live slot.
fn interior_start(inst: &ConvexInstance<'_>, fixed: &[bool]) -> Vec<f64> {
    let s = inst.scenario;
    let p = &s.params;
    let idx = &inst.index;
    let (np, slots) = (p.caching_slots, p.slots);
    let alive = |v: Option<usize>| v.filter(|&j| !fixed[j]);
    let size = |l: usize| s.library.sizes[l] / super::BIT_UNIT;
    let mut x = vec![0.0; inst.num_vars()];

    let capacity = inst
        .rows
        .iter()
        .find(|r| r.label == RowLabel::Capacity)
        .map_or(0.0, |r| r.rhs);
    let free: Vec<(usize, usize)> = idx
        .alpha
        .iter()
        .enumerate()
        .filter_map(|(l, &j)| alive(j).map(|j| (l, j)))
        .collect();
    let free_bits: f64 = free.iter().map(|&(l, _)| size(l)).sum();
    let share = if free_bits > 0.0 { (0.5 * capacity / free_bits).min(0.5) } else { 0.0 };
    let mut cached: Vec<f64> = inst
        .placement
        .states
        .iter()
        .map(|st| if *st == CacheState::Cached { 1.0 } else { 0.0 })
        .collect();
    for &(l, j) in &free {
        x[j] = share;
        cached[l] = share;
    }

    let cached_total: f64 = cached.iter().enumerate().map(|(l, c)| c * size(l)).sum();
    let uploads: Vec<usize> = idx.caching_offload.iter().filter_map(|&v| alive(v)).collect();
    for &j in &uploads {
        x[j] = cached_total / uploads.len() as f64;
    }
    let last = (0..np).rev().find(|&i| alive(idx.caching_mec[i]).is_some());
    let (mut uploaded, mut executed) = (0.0, 0.0);
    for i in 0..np {
        if let Some(j) = alive(idx.caching_mec[i]) {
            let v = if Some(i) == last { cached_total - executed } else { 0.5 * (uploaded - executed) };
            x[j] = v;
            executed += v;
        }
        if let Some(j) = alive(idx.caching_offload[i]) {
            uploaded += x[j];
        }
    }

    for k in 0..p.num_wds {
        let mut arrived = vec![0.0; slots];
        for (l, f) in inst.first[k].iter().enumerate() {
            if let Some(f) = *f {
                for a in &mut arrived[f..] {
                    *a += (1.0 - cached[l]) * size(l);
                }
            }
        }
        let slot = |n: usize| (alive(idx.local[k][n]), alive(idx.offload[k][n]));
        let last = (0..slots).rev().find(|&n| {
            let (a, b) = slot(n);
            a.is_some() || b.is_some()
        });
        let mut done = 0.0;
        for n in 0..slots {
            let u = if Some(n) == last { arrived[slots - 1] - done } else { 0.5 * (arrived[n] - done) };
            match slot(n) {
                (Some(a), Some(b)) => {
                    x[a] = 0.5 * u;
                    x[b] = 0.5 * u;
                }
                (Some(a), None) | (None, Some(a)) => x[a] = u,
                (None, None) => continue,
            }
            done += u;
        }
    }

    let mut received = vec![0.0; slots];
    for n in 0..slots {
        let prev = if n > 0 { received[n - 1] } else { 0.0 };
        received[n] = prev
            + (0..p.num_wds)
                .filter_map(|k| alive(idx.offload[k][n]))
                .map(|j| x[j])
                .sum::<f64>();
    }
    let last = (0..slots).rev().find(|&n| alive(idx.mec[n]).is_some());
    let mut executed = 0.0;
    for n in 1..slots {
        if let Some(j) = alive(idx.mec[n]) {
            let v = if Some(n) == last { received[slots - 1] - executed } else { 0.5 * (received[n - 1] - executed) };
            x[j] = v;
            executed += v;
        }
    }
    x
}

struct SparseRow {
    row: usize,
    idx: Vec<usize>,
    val: Vec<f64>,
    rhs: f64,
}

impl SparseRow {
    fn dot(&self, z: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&j, &a)| a * z[j]).sum()
    }

    fn add_transposed(&self, scale: f64, out: &mut [f64]) {
        for (&j, &a) in self.idx.iter().zip(&self.val) {
            out[j] += scale * a;
        }
    }
}

/// The presolved problem over live variables only.
struct Reduced {
    map: Vec<usize>,
    terms: Vec<Option<EnergyTerm>>,
    upper: Vec<Option<f64>>,
    ineq: Vec<SparseRow>,
    eq: Vec<SparseRow>,
    e: DMatrix<f64>,
}

/// Primal-dual iterate: live variables, multipliers of the inequality rows,
/// of `z >= 0`, of `z <= u`, and of the equality rows.
#[derive(Clone)]
struct Iterate {
    z: Vec<f64>,
    rows: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    eq: Vec<f64>,
}

/// Slacks of every inequality at a primal point.
struct Slacks {
    rows: Vec<f64>,
    upper: Vec<f64>,
}

struct Residuals {
    dual: Vec<f64>,
    /// `lambda * slack - 1/t` for rows, lower bounds and upper bounds.
    cent: Vec<f64>,
    primal: Vec<f64>,
}

impl Residuals {
    fn norm(&self) -> f64 {
        self.dual
            .iter()
            .chain(&self.cent)
            .chain(&self.primal)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn dual_max(&self) -> f64 {
        self.dual.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn cent_max(&self) -> f64 {
        self.cent.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn primal_max(&self) -> f64 {
        self.primal.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Reduced {
    fn new(inst: &ConvexInstance<'_>, pre: &Presolved) -> Self {
        let mut pos = vec![usize::MAX; inst.num_vars()];
        let map: Vec<usize> = (0..inst.num_vars()).filter(|&j| !pre.fixed[j]).collect();
        for (i, &j) in map.iter().enumerate() {
            pos[j] = i;
        }
        let mut ineq = Vec::new();
        let mut eq = Vec::new();
        for (r, row) in inst.rows.iter().enumerate() {
            if pre.state[r] != RowState::Active {
                continue;
            }
            let live = live_coeffs(&row.coeffs, &pre.fixed);
            let sparse = SparseRow {
                row: r,
                idx: live.iter().map(|&(j, _)| pos[j]).collect(),
                val: live.iter().map(|&(_, a)| a).collect(),
                rhs: row.rhs,
            };
            match row.sense {
                Sense::Le => ineq.push(sparse),
                Sense::Eq => eq.push(sparse),
            }
        }
        let mut e = DMatrix::zeros(eq.len(), map.len());
        for (i, row) in eq.iter().enumerate() {
            for (&j, &a) in row.idx.iter().zip(&row.val) {
                e[(i, j)] += a;
            }
        }
        Self {
            terms: map.iter().map(|&j| inst.terms[j]).collect(),
            upper: map.iter().map(|&j| inst.upper_bound(j)).collect(),
            map,
            ineq,
            eq,
            e,
        }
    }

    fn n(&self) -> usize {
        self.map.len()
    }

    /// Number of inequality constraints, bounds included.
    fn num_inequalities(&self) -> usize {
        self.ineq.len() + self.n() + self.upper.iter().filter(|u| u.is_some()).count()
    }

    fn objective(&self, z: &[f64]) -> f64 {
        self.terms.iter().zip(z).filter_map(|(t, &v)| t.map(|t| t.value(v))).sum()
    }

    fn slacks(&self, z: &[f64]) -> Slacks {
        Slacks {
            rows: self.ineq.iter().map(|r| r.rhs - r.dot(z)).collect(),
            upper: z.iter().zip(&self.upper).map(|(&v, u)| u.map_or(1.0, |u| u - v)).collect(),
        }
    }

    fn strictly_feasible(&self, z: &[f64]) -> bool {
        let s = self.slacks(z);
        z.iter().all(|&v| v > 0.0) && s.rows.iter().chain(&s.upper).all(|&v| v > 0.0)
    }

    fn eq_residual(&self, z: &[f64]) -> Vec<f64> {
        self.eq.iter().map(|r| r.dot(z) - r.rhs).collect()
    }

    /// Describes the first violated strict inequality, if any.
    fn interior_violation(&self, z: &[f64], inst: &ConvexInstance<'_>) -> Option<String> {
        let s = self.slacks(z);
        for (i, &v) in z.iter().enumerate() {
            if !(v > 0.0) {
                return Some(format!("{} = {v}", inst.vars[self.map[i]]));
            }
            if !(s.upper[i] > 0.0) {
                return Some(format!("{} = {v} reaches its upper bound", inst.vars[self.map[i]]));
            }
        }
        for (row, v) in self.ineq.iter().zip(&s.rows) {
            if !(*v > 0.0) {
                return Some(format!("{} has slack {v}", inst.rows[row.row].label));
            }
        }
        for (row, v) in self.eq.iter().zip(self.eq_residual(z)) {
            if v.abs() > 1e-9 * (1.0 + row.rhs.abs()) {
                return Some(format!("{} misses by {v}", inst.rows[row.row].label));
            }
        }
        None
    }

    /// Gradient of the Lagrangian at `it`.
    fn dual_residual(&self, it: &Iterate) -> Vec<f64> {
        let mut r: Vec<f64> = (0..self.n())
            .map(|j| self.terms[j].map_or(0.0, |t| t.grad(it.z[j])) - it.lower[j] + it.upper[j])
            .collect();
        for (row, &lam) in self.ineq.iter().zip(&it.rows) {
            row.add_transposed(lam, &mut r);
        }
        for (row, &nu) in self.eq.iter().zip(&it.eq) {
            row.add_transposed(nu, &mut r);
        }
        r
    }

    fn residuals(&self, it: &Iterate, t: f64) -> Residuals {
        let s = self.slacks(&it.z);
        let inv_t = 1.0 / t;
        let mut cent = Vec::with_capacity(self.num_inequalities());
        cent.extend(it.rows.iter().zip(&s.rows).map(|(l, s)| l * s - inv_t));
        cent.extend(it.lower.iter().zip(&it.z).map(|(l, z)| l * z - inv_t));
        for j in 0..self.n() {
            if self.upper[j].is_some() {
                cent.push(it.upper[j] * s.upper[j] - inv_t);
            }
        }
        Residuals { dual: self.dual_residual(it), cent, primal: self.eq_residual(&it.z) }
    }

    /// Least-squares equality multipliers for the current inequality multipliers.
    fn fit_eq_multipliers(&self, it: &mut Iterate) {
        if self.eq.is_empty() {
            return;
        }
        it.eq.iter_mut().for_each(|v| *v = 0.0);
        let r = DVector::from_vec(self.dual_residual(it));
        let eet = &self.e * self.e.transpose();
        let rhs = -(&self.e * r);
        let nu = eet
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| eet.lu().solve(&rhs))
            .unwrap_or_else(|| DVector::zeros(self.eq.len()));
        it.eq = nu.as_slice().to_vec();
    }

    /// Primal-dual Newton direction for the centrality conditions at `t`.
    fn direction(&self, it: &Iterate, t: f64) -> Result<Iterate> {
        let n = self.n();
        let z = &it.z;
        let s = self.slacks(z);
        let inv_t = 1.0 / t;

        let mut h = DMatrix::zeros(n, n);
        let mut g = vec![0.0; n];
        for j in 0..n {
            let (gj, hj) = self.terms[j].map_or((0.0, 0.0), |term| {
                let (_, gr, he) = term.eval(z[j]);
                (gr, he)
            });
            g[j] = gj - inv_t / z[j];
            h[(j, j)] = hj + it.lower[j] / z[j];
            if self.upper[j].is_some() {
                g[j] += inv_t / s.upper[j];
                h[(j, j)] += it.upper[j] / s.upper[j];
            }
        }
        for (row, (&lam, &sr)) in self.ineq.iter().zip(it.rows.iter().zip(&s.rows)) {
            row.add_transposed(inv_t / sr, &mut g);
            let w = lam / sr;
            for (a, &i) in row.idx.iter().enumerate() {
                let wa = w * row.val[a];
                for (b, &j) in row.idx.iter().enumerate() {
                    h[(i, j)] += wa * row.val[b];
                }
            }
        }
        for (row, &nu) in self.eq.iter().zip(&it.eq) {
            row.add_transposed(nu, &mut g);
        }

        let solver_failed = || Error::MaxIter { iterations: 0, residual: f64::NAN };
        let chol = match h.clone().cholesky() {
            Some(c) => c,
            None => {
                let bump = 1e-14 * h.diagonal().amax().max(1.0);
                for j in 0..n {
                    h[(j, j)] += bump;
                }
                h.cholesky().ok_or_else(solver_failed)?
            }
        };
        let g = DVector::from_vec(g);
        let hg = chol.solve(&g);
        let (dz, dnu) = if self.eq.is_empty() {
            (-hg, DVector::zeros(0))
        } else {
            let he = chol.solve(&self.e.transpose());
            let schur = &self.e * &he;
            let rhs = DVector::from_vec(self.eq_residual(z)) - &self.e * &hg;
            let dnu = match schur.clone().cholesky() {
                Some(c) => c.solve(&rhs),
                None => schur.lu().solve(&rhs).ok_or_else(solver_failed)?,
            };
            (-(hg + he * &dnu), dnu)
        };

        let rows = self
            .ineq
            .iter()
            .zip(it.rows.iter().zip(&s.rows))
            .map(|(row, (&lam, &sr))| -lam + inv_t / sr + lam / sr * row.dot(dz.as_slice()))
            .collect();
        let lower = (0..n).map(|j| -it.lower[j] + inv_t / z[j] - it.lower[j] / z[j] * dz[j]).collect();
        let upper = (0..n)
            .map(|j| {
                if self.upper[j].is_some() {
                    -it.upper[j] + inv_t / s.upper[j] + it.upper[j] / s.upper[j] * dz[j]
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Iterate { z: dz.as_slice().to_vec(), rows, lower, upper, eq: dnu.as_slice().to_vec() })
    }
}

impl Iterate {
    fn advance(&self, d: &Iterate, step: f64) -> Iterate {
        let axpy = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + step * y).collect::<Vec<f64>>();
        Iterate {
            z: axpy(&self.z, &d.z),
            rows: axpy(&self.rows, &d.rows),
            lower: axpy(&self.lower, &d.lower),
            upper: axpy(&self.upper, &d.upper),
            eq: axpy(&self.eq, &d.eq),
        }
    }

    /// Largest step keeping every multiplier positive.
    fn max_dual_step(&self, d: &Iterate, has_upper: &[bool]) -> f64 {
        let mut s_max: f64 = 1.0;
        let mut limit = |v: f64, dv: f64| {
            if dv < 0.0 {
                s_max = s_max.min(-v / dv);
            }
        };
        for (v, dv) in self.rows.iter().zip(&d.rows) {
            limit(*v, *dv);
        }
        for (v, dv) in self.lower.iter().zip(&d.lower) {
            limit(*v, *dv);
        }
        for (j, (v, dv)) in self.upper.iter().zip(&d.upper).enumerate() {
            if has_upper[j] {
                limit(*v, *dv);
            }
        }
        s_max
    }
}

/// Solves a continuous instance to the given KKT tolerance (solver units).
///
/// Returns `Infeasible` with a certificate when presolve finds fixed caching
/// decisions that no schedule can satisfy, and `MaxIter` when the Newton
/// budget runs out before the tolerance is met.
pub fn solve(inst: &ConvexInstance<'_>, tol: f64) -> Result<ConvexSolution> {
    if let Some(cert) = &inst.infeasible {
        return Ok(ConvexSolution::infeasible(inst, cert.clone()));
    }
    let pre = match presolve(inst) {
        Ok(p) => p,
        Err(cert) => return Ok(ConvexSolution::infeasible(inst, cert)),
    };
    let red = Reduced::new(inst, &pre);
    let full_start = interior_start(inst, &pre.fixed);
    let z: Vec<f64> = red.map.iter().map(|&j| full_start[j]).collect();
    if let Some(why) = red.interior_violation(&z, inst) {
        return Err(Error::NoInterior(why));
    }

    let n = red.n();
    let has_upper: Vec<bool> = red.upper.iter().map(Option::is_some).collect();
    let m = red.num_inequalities() as f64;
    let t_final = 10.0 / tol;
    let mut t = if n == 0 { t_final } else { (m / red.objective(&z).max(1e-6)).clamp(1e-3, t_final) };
    let s0 = red.slacks(&z);
    let mut it = Iterate {
        rows: s0.rows.iter().map(|s| 1.0 / (t * s)).collect(),
        lower: z.iter().map(|v| 1.0 / (t * v)).collect(),
        upper: (0..n).map(|j| if has_upper[j] { 1.0 / (t * s0.upper[j]) } else { 0.0 }).collect(),
        eq: vec![0.0; red.eq.len()],
        z,
    };
    red.fit_eq_multipliers(&mut it);

    let mut iterations = 0;
    let mut exhausted = false;
    if n > 0 {
        'outer: loop {
            let last_stage = t >= t_final;
            let dual_target = if last_stage { 0.1 * tol } else { (1.0 / t).max(0.1 * tol) };
            loop {
                let res = red.residuals(&it, t);
                trace!(
                    "t={t:.3e} iter={iterations} dual={:.3e} cent={:.3e} primal={:.3e}",
                    res.dual_max(),
                    res.cent_max(),
                    res.primal_max()
                );
                let scale = gradient_scale(&red.terms, &it.z);
                if res.dual_max() <= dual_target * scale && res.cent_max() <= 0.5 / t && res.primal_max() <= 0.1 * tol {
                    break;
                }
                if iterations >= MAX_NEWTON {
                    exhausted = true;
                    break 'outer;
                }
                iterations += 1;
                let d = red.direction(&it, t)?;
                let mut step = TO_BOUNDARY * it.max_dual_step(&d, &has_upper);
                let norm = res.norm();
                let accepted = loop {
                    let next = it.advance(&d, step);
                    if red.strictly_feasible(&next.z) && red.residuals(&next, t).norm() <= (1.0 - ARMIJO * step) * norm {
                        break Some(next);
                    }
                    step *= BACKTRACK;
                    if step < 1e-12 {
                        break None;
                    }
                };
                match accepted {
                    Some(next) => it = next,
                    None => {
                        trace!("line search stalled at t={t:.3e}");
                        if last_stage {
                            break 'outer;
                        }
                        break;
                    }
                }
            }
            if last_stage {
                break;
            }
            t = (t * T_GROWTH).min(t_final);
        }
    }

    let point = recover_multipliers(inst, &pre, &red, &it);
    let residual = kkt_residual(inst, &point)?;
    let status = if residual <= tol { SolveStatus::Optimal } else { SolveStatus::MaxIter };
    if exhausted {
        debug!("Newton budget of {MAX_NEWTON} steps exhausted at t={t:.3e}");
    }
    let objective = inst.objective_scaled(&point.x) * ENERGY_UNIT;
    let s = red.slacks(&it.z);
    let gap: f64 = it.rows.iter().zip(&s.rows).map(|(l, s)| l * s).sum::<f64>()
        + it.lower.iter().zip(&it.z).map(|(l, z)| l * z).sum::<f64>()
        + it.upper.iter().zip(&s.upper).map(|(l, s)| l * s).sum::<f64>();
    debug!(
        "convex solve: {} vars ({n} live), {} rows, {iterations} Newton steps, residual {residual:.2e}, objective {objective:.9e} J",
        inst.num_vars(),
        inst.rows.len()
    );
    Ok(ConvexSolution {
        status,
        point,
        objective,
        kkt_residual: residual,
        duality_gap: gap * ENERGY_UNIT,
        newton_iterations: iterations,
        certificate: None,
    })
}

/// Expands the iterate to the full instance and recovers multipliers of
/// variables fixed by presolve.
fn recover_multipliers(inst: &ConvexInstance<'_>, pre: &Presolved, red: &Reduced, it: &Iterate) -> KktPoint {
    let nv = inst.num_vars();
    let mut x = vec![0.0; nv];
    let mut lower = vec![0.0; nv];
    let mut upper = vec![0.0; nv];
    let mut rows = vec![0.0; inst.rows.len()];
    for (i, &j) in red.map.iter().enumerate() {
        x[j] = it.z[i];
        lower[j] = it.lower[i];
        if red.upper[i].is_some() {
            upper[j] = it.upper[i];
        }
    }
    for (k, row) in red.ineq.iter().enumerate() {
        rows[row.row] = it.rows[k];
    }
    for (k, row) in red.eq.iter().enumerate() {
        rows[row.row] = it.eq[k];
    }

    // Variables fixed by presolve: walk the forcing rows backwards so each
    // row sees the final multipliers of every row that fired after it.
    let base = |j: usize, rows: &[f64]| -> f64 {
        let mut v = inst.terms[j].map_or(0.0, |term| term.grad(0.0));
        for (r, row) in inst.rows.iter().enumerate() {
            if rows[r] != 0.0 {
                v += rows[r] * row.coeffs.iter().filter(|&&(c, _)| c == j).map(|&(_, a)| a).sum::<f64>();
            }
        }
        v
    };
    for (r, vars) in pre.forcing.iter().rev() {
        let RowState::Forcing(sign) = pre.state[*r] else { unreachable!("forcing list holds forcing rows") };
        let row = &inst.rows[*r];
        let mut kappa: f64 = 0.0;
        for &j in vars {
            let a = sign * row.coeffs.iter().filter(|&&(c, _)| c == j).map(|&(_, a)| a).sum::<f64>();
            kappa = kappa.max(-base(j, &rows) / a);
        }
        rows[*r] = sign * kappa;
    }
    for j in (0..nv).filter(|&j| pre.fixed[j]) {
        lower[j] = base(j, &rows);
    }

    KktPoint { x, multipliers: Multipliers { rows, lower, upper } }
}

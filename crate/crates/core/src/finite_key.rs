//! Finite-size key-rate analysis: maximize the final key length subject to
//! the composed failure budget.
//!
//! For a sifted key of `b` bits at error rate `qber`, the program searches
//! deviation terms `(beta, xi, nu)` and the key fraction `alpha`:
//!
//! - `k = floor(beta * b)` bits feed parameter estimation, `n = b - k`
//!   remain for the key;
//! - `eps_pe(nu, xi)^2 = 2 (exp(-2 b k xi^2 / (n+1)) + exp(-2 gamma (n^2 nu'^2 - 1)))`
//!   with `nu' = nu - xi` and
//!   `gamma = max(1/(n+1) + 1/(k+1), 1/(b_err+1) + 1/(b-b_err+1))`,
//!   `b_err = ceil(b (qber + xi))`;
//! - `eps_pa(nu) = 1/2 sqrt(2^(-n (1 - h2(qber + nu)) + ev + z + ell))` where
//!   `z` is the syndrome leakage and `ev` the error-verification tag length;
//! - feasibility: `eps_ec + eps_pe + eps_pa <= eps_qkd` with
//!   `eps_qkd = 10^-s` and `eps_ec = 10^-(s+2)`.
//!
//! The search box is `0 < xi < nu < 1/2 - qber`, which keeps `nu'` positive;
//! `nu'` enters squared, so points with the opposite ordering evaluate
//! identically. The search itself is a coarse grid over `(beta, xi, nu)`
//! with an inner bisection on the key length (the constraint is monotone in
//! `ell` through `eps_pa`), refined around the incumbent with halved steps.

use serde::{Deserialize, Serialize};

use crate::security::binary_entropy;

/// Inputs of one optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteKeyProblem {
    /// Sifted key length in bits.
    pub b: usize,
    /// Observed quantum bit error rate.
    pub qber: f64,
    /// Security exponent: `eps_qkd = 10^-s`, `eps_ec = 10^-(s+2)`.
    pub s: f64,
    /// Reconciliation efficiency multiplying the Shannon limit.
    pub f_ec: f64,
    /// Syndrome length override; default `ceil(f_ec * h2(qber) * n)` per
    /// candidate split.
    pub syndrome_len: Option<usize>,
    /// Error-verification tag length; default `ceil(log2(1 / eps_ec))`.
    pub ev_tag_len: Option<usize>,
    /// Override the total failure budget (defaults to `10^-s`).
    pub eps_qkd: Option<f64>,
    /// Pin the parameter-estimation split (used once the reveal already
    /// happened and only `(nu, xi, alpha)` remain free).
    pub fixed_k: Option<usize>,
    pub search: SearchParams,
}

impl FiniteKeyProblem {
    pub fn new(b: usize, qber: f64, s: f64, f_ec: f64) -> Self {
        Self {
            b,
            qber,
            s,
            f_ec,
            syndrome_len: None,
            ev_tag_len: None,
            eps_qkd: None,
            fixed_k: None,
            search: SearchParams::default(),
        }
    }

    pub fn eps_qkd(&self) -> f64 {
        self.eps_qkd.unwrap_or_else(|| 10f64.powf(-self.s))
    }

    pub fn eps_ec(&self) -> f64 {
        10f64.powf(-(self.s + 2.0))
    }

    pub fn ev_tag_len_resolved(&self) -> usize {
        self.ev_tag_len
            .unwrap_or_else(|| (1.0 / self.eps_ec()).log2().ceil() as usize)
    }
}

/// Grid-search resolution knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Outer grid steps across each box (resolution 1/outer_steps).
    pub outer_steps: usize,
    /// Refinement passes, each halving the step around the incumbent.
    pub refine_passes: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            outer_steps: 64,
            refine_passes: 2,
        }
    }
}

/// Result of one optimization; infeasibility is a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteKeySolution {
    pub feasible: bool,
    /// Final key length `floor(alpha * b)`.
    pub ell: usize,
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
    pub xi: f64,
    pub k: usize,
    pub n: usize,
    pub syndrome_len: usize,
    pub ev_tag_len: usize,
    pub eps_pa: f64,
    pub eps_pe: f64,
    pub eps_ec: f64,
    pub eps_qkd: f64,
    /// `eps_qkd - (eps_ec + eps_pe + eps_pa)` at the returned point.
    pub slack: f64,
    pub eps_pa_log2: f64,
    pub eps_pe_log2: f64,
}

impl FiniteKeySolution {
    fn infeasible(problem: &FiniteKeyProblem) -> Self {
        Self {
            feasible: false,
            ell: 0,
            alpha: 0.0,
            beta: 0.0,
            nu: 0.0,
            xi: 0.0,
            k: 0,
            n: 0,
            syndrome_len: 0,
            ev_tag_len: problem.ev_tag_len_resolved(),
            eps_pa: 0.0,
            eps_pe: 0.0,
            eps_ec: problem.eps_ec(),
            eps_qkd: problem.eps_qkd(),
            slack: 0.0,
            eps_pa_log2: f64::NEG_INFINITY,
            eps_pe_log2: f64::NEG_INFINITY,
        }
    }
}

/// One evaluated `(k, xi, nu)` candidate before the key-length search.
#[derive(Debug, Clone, Copy)]
pub struct CandidatePoint {
    pub k: usize,
    pub n: usize,
    pub syndrome_len: usize,
    pub ev_tag_len: usize,
    /// log2 of `eps_pe`.
    pub eps_pe_log2: f64,
    /// Static part of the `eps_pa` exponent: `-n (1 - h2(qber + nu)) + ev + z`.
    pub pa_exponent_base: f64,
}

/// Evaluate the failure terms of a candidate split. Returns `None` when the
/// point violates a box or counting constraint.
///
/// The deviation terms enter only through `nu'^2` and `h2(qber + nu)`, so
/// either ordering of `(xi, nu)` evaluates; the optimizer itself searches
/// the `xi < nu` box, where the key-part deviation exceeds the sampling
/// deviation.
pub fn evaluate_candidate(
    problem: &FiniteKeyProblem,
    k: usize,
    xi: f64,
    nu: f64,
) -> Option<CandidatePoint> {
    let b = problem.b;
    if k == 0 || k >= b {
        return None;
    }
    let n = b - k;
    let half_box = 0.5 - problem.qber;
    if !(xi > 0.0 && nu > 0.0 && xi != nu && xi < half_box && nu < half_box) {
        return None;
    }
    let nu_prime = nu - xi;
    let n_f = n as f64;
    if n_f * n_f * nu_prime * nu_prime <= 1.0 {
        return None;
    }
    let b_f = b as f64;
    let k_f = k as f64;
    let b_err = (b_f * (problem.qber + xi)).ceil().min(b_f) as usize;
    let gamma = (1.0 / (n_f + 1.0) + 1.0 / (k_f + 1.0))
        .max(1.0 / (b_err as f64 + 1.0) + 1.0 / ((b - b_err) as f64 + 1.0));
    // eps_pe^2 = 2 (e^e1 + e^e2), evaluated by log-add-exp
    let e1 = -2.0 * b_f * k_f * xi * xi / (n_f + 1.0);
    let e2 = -2.0 * gamma * (n_f * n_f * nu_prime * nu_prime - 1.0);
    let (hi, lo) = if e1 >= e2 { (e1, e2) } else { (e2, e1) };
    let ln_pe_sq = std::f64::consts::LN_2 + hi + (lo - hi).exp().ln_1p();
    let eps_pe_log2 = ln_pe_sq / (2.0 * std::f64::consts::LN_2);

    let z = problem
        .syndrome_len
        .unwrap_or_else(|| (problem.f_ec * binary_entropy(problem.qber) * n_f).ceil() as usize);
    let ev = problem.ev_tag_len_resolved();
    let pa_exponent_base = -n_f * (1.0 - binary_entropy(problem.qber + nu)) + ev as f64 + z as f64;
    Some(CandidatePoint {
        k,
        n,
        syndrome_len: z,
        ev_tag_len: ev,
        eps_pe_log2,
        pa_exponent_base,
    })
}

/// `log2(eps_pa)` at key length `ell`: `-1 + (base + ell) / 2`.
pub fn eps_pa_log2(point: &CandidatePoint, ell: usize) -> f64 {
    -1.0 + (point.pa_exponent_base + ell as f64) / 2.0
}

/// Feasibility of the composed budget at key length `ell`.
pub fn feasible_at(problem: &FiniteKeyProblem, point: &CandidatePoint, ell: usize) -> bool {
    let total = problem.eps_ec() + point.eps_pe_log2.exp2() + eps_pa_log2(point, ell).exp2();
    total <= problem.eps_qkd()
}

/// Largest feasible key length at a candidate point, by bisection over
/// `[0, n]`; `None` if even `ell = 0` fails.
fn best_ell(problem: &FiniteKeyProblem, point: &CandidatePoint) -> Option<usize> {
    if !feasible_at(problem, point, 0) {
        return None;
    }
    let (mut lo, mut hi) = (0usize, point.n);
    if feasible_at(problem, point, hi) {
        return Some(hi);
    }
    // invariant: lo feasible, hi infeasible
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible_at(problem, point, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

struct Incumbent {
    ell: usize,
    beta: f64,
    xi: f64,
    nu: f64,
    point: CandidatePoint,
}

/// Maximize `ell = floor(alpha b)` over the program's box. Coarse-to-fine:
/// an outer grid over `(beta, xi, nu)`, bisection on `ell`, then refinement
/// passes halving the grid step around the incumbent. Ties prefer the
/// lexicographically smallest `(beta, xi, nu)`, which the ascending scan
/// order provides.
pub fn finite_key_optimize(problem: &FiniteKeyProblem) -> FiniteKeySolution {
    let b = problem.b;
    let half_box = 0.5 - problem.qber;
    if b == 0 || problem.qber >= 0.5 || half_box <= 0.0 {
        return FiniteKeySolution::infeasible(problem);
    }

    let steps = problem.search.outer_steps.max(4);
    let beta_step = 0.5 / steps as f64;
    let dev_step = half_box / steps as f64;

    let k_of_beta = |beta: f64| (beta * b as f64).floor() as usize;
    let outer_splits: Vec<(usize, f64)> = match problem.fixed_k {
        Some(k) => vec![(k, k as f64 / b as f64)],
        None => (1..=steps)
            .map(|i| {
                let beta = i as f64 * beta_step;
                (k_of_beta(beta), beta)
            })
            .collect(),
    };

    let mut incumbent: Option<Incumbent> = None;
    let consider = |problem: &FiniteKeyProblem,
                    incumbent: &mut Option<Incumbent>,
                    k: usize,
                    beta: f64,
                    xi: f64,
                    nu: f64| {
        // the search stays in the sound ordering
        if xi >= nu {
            return;
        }
        let Some(point) = evaluate_candidate(problem, k, xi, nu) else {
            return;
        };
        let Some(ell) = best_ell(problem, &point) else {
            return;
        };
        let better = match incumbent {
            None => true,
            Some(inc) => ell > inc.ell,
        };
        if better {
            *incumbent = Some(Incumbent {
                ell,
                beta,
                xi,
                nu,
                point,
            });
        }
    };

    for &(k, beta) in &outer_splits {
        for i in 1..steps {
            let xi = i as f64 * dev_step;
            for j in (i + 1)..steps {
                let nu = j as f64 * dev_step;
                consider(problem, &mut incumbent, k, beta, xi, nu);
            }
        }
    }

    // refinement: halve the steps around the incumbent, a few cells wide
    let mut beta_res = beta_step;
    let mut dev_res = dev_step;
    for _ in 0..problem.search.refine_passes {
        let Some(inc) = &incumbent else { break };
        let (beta0, xi0, nu0) = (inc.beta, inc.xi, inc.nu);
        beta_res /= 2.0;
        dev_res /= 2.0;
        let span = 3i64;
        let splits: Vec<(usize, f64)> = match problem.fixed_k {
            Some(k) => vec![(k, k as f64 / b as f64)],
            None => (-span..=span)
                .map(|d| beta0 + d as f64 * beta_res)
                .filter(|&beta| beta > 0.0 && beta <= 0.5)
                .map(|beta| (k_of_beta(beta), beta))
                .collect(),
        };
        for &(k, beta) in &splits {
            for dx in -span..=span {
                let xi = xi0 + dx as f64 * dev_res;
                for dn in -span..=span {
                    let nu = nu0 + dn as f64 * dev_res;
                    consider(problem, &mut incumbent, k, beta, xi, nu);
                }
            }
        }
    }

    match incumbent {
        None => FiniteKeySolution::infeasible(problem),
        Some(inc) => {
            let point = inc.point;
            let ell = inc.ell;
            // re-verify the constraint at the returned point
            let eps_pa = eps_pa_log2(&point, ell).exp2();
            let eps_pe = point.eps_pe_log2.exp2();
            let eps_ec = problem.eps_ec();
            let slack = problem.eps_qkd() - (eps_ec + eps_pe + eps_pa);
            debug_assert!(slack >= 0.0, "returned point must re-verify feasible");
            FiniteKeySolution {
                feasible: true,
                ell,
                alpha: ell as f64 / b as f64,
                beta: inc.beta,
                nu: inc.nu,
                xi: inc.xi,
                k: point.k,
                n: point.n,
                syndrome_len: point.syndrome_len,
                ev_tag_len: point.ev_tag_len,
                eps_pa,
                eps_pe,
                eps_ec,
                eps_qkd: problem.eps_qkd(),
                slack,
                eps_pa_log2: eps_pa_log2(&point, ell),
                eps_pe_log2: point.eps_pe_log2,
            }
        }
    }
}

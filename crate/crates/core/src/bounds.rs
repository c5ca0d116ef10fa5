//! Numeric side of the closing argument: the probability recursion p_{k,m},
//! the Cramér rate f, the integer N and the final inequalities.
//!
//! Everything is kept in the log domain. Each table entry stores both
//! ln p and ln(1 − p) so that neither end loses precision.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundParams {
    pub p_good: f64,
    pub p_bad: f64,
    pub kappa: f64,
    pub rho: f64,
    pub c: f64,
    pub l: u64,
}

impl BoundParams {
    pub fn new(p_good: f64, p_bad: f64, kappa: f64, rho: f64, c: f64, l: u64) -> Result<Self> {
        let p = Self { p_good, p_bad, kappa, rho, c, l };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.p_good > 0.0 && self.p_good <= 1.0) || !(self.p_bad > 0.0 && self.p_bad <= 1.0) {
            return Err(Error::Config(format!("probabilities p_G={} p_B={} must lie in (0,1]", self.p_good, self.p_bad)));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Config(format!("kappa={} must be positive", self.kappa)));
        }
        if !(self.rho > 0.5 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho={} outside (1/2,1)", self.rho)));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::Config(format!("c={} outside (0,1]", self.c)));
        }
        if self.l == 0 {
            return Err(Error::Config("L must be positive".into()));
        }
        Ok(())
    }

    pub fn with_l(&self, l: u64) -> Self {
        Self { l, ..*self }
    }

    pub fn rho_hat(&self) -> f64 {
        self.rho - 0.5
    }

    /// J = ρ̂ (c/6) √L, left real-valued.
    pub fn j(&self) -> f64 {
        self.rho_hat() * self.c / 6.0 * (self.l as f64).sqrt()
    }

    pub fn q0(&self) -> f64 {
        1.0 - self.p_good
    }

    /// ln q_k = (k + 1) ln q_0.
    pub fn ln_q(&self, k: u32) -> f64 {
        (k as f64 + 1.0) * self.q0().ln()
    }

    /// ln p_k = ln(1 − q_0^{k+1}).
    pub fn ln_p(&self, k: u32) -> f64 {
        (-self.ln_q(k).exp()).ln_1p()
    }

    pub fn p(&self, k: u32) -> f64 {
        self.ln_p(k).exp()
    }

    pub fn theta(&self) -> ThetaValue {
        theta(self.q0())
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThetaValue {
    pub value: f64,
    pub neg_log: f64,
    /// Factors summed explicitly: k = 0..=terms−1.
    pub terms: u32,
    /// Upper bound on the omitted part of −ln Θ.
    pub tail_bound: f64,
}

const THETA_TAIL: f64 = 1e-15;

/// Θ = ∏_{k≥0} (1 − q_0^{k+1}) with the tail after K bounded by
/// q_0^{K+2} / ((1 − q_0)(1 − q_0^{K+2})).
pub fn theta(q0: f64) -> ThetaValue {
    if q0 <= 0.0 {
        return ThetaValue { value: 1.0, neg_log: 0.0, terms: 0, tail_bound: 0.0 };
    }
    let lq = q0.ln();
    let mut neg_log = 0.0;
    let mut k = 0u32;
    loop {
        neg_log -= (-((k as f64 + 1.0) * lq).exp()).ln_1p();
        let next = ((k as f64 + 2.0) * lq).exp();
        let tail = next / ((1.0 - q0) * (1.0 - next));
        k += 1;
        if tail <= THETA_TAIL || k > 100_000 {
            return ThetaValue { value: (-neg_log).exp(), neg_log, terms: k, tail_bound: tail };
        }
    }
}

/// One entry of the recursion, as (ln p, ln(1 − p)).
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct LogProb {
    pub ln_p: f64,
    pub ln_1m: f64,
}

impl LogProb {
    pub fn p(&self) -> f64 {
        self.ln_p.exp()
    }
    pub fn one_minus(&self) -> f64 {
        self.ln_1m.exp()
    }
    fn from_ln_p(ln_p: f64) -> Self {
        Self { ln_p, ln_1m: ln_one_minus_exp(ln_p) }
    }
}

/// ln(1 − e^x) for x ≤ 0.
fn ln_one_minus_exp(x: f64) -> f64 {
    if x >= 0.0 {
        f64::NEG_INFINITY
    } else if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// ln(−ln(1 − p)), from ln(1 − p) unless that underflowed to 0.
fn ln_neg_ln_1m(x: LogProb) -> f64 {
    if x.ln_1m < 0.0 {
        (-x.ln_1m).ln()
    } else {
        // −ln(1−p) = p (1 + p/2 + …)
        x.ln_p + (x.ln_p.exp() / 2.0).ln_1p()
    }
}

/// 1 − (1 − p)^J in log form.
fn at_least_one(x: LogProb, j: f64) -> LogProb {
    // a = J ln(1 − p) ≤ 0, s = ln(−a)
    let s = j.ln() + ln_neg_ln_1m(x);
    let a = -s.exp();
    let ln_p = if s < -20.0 { s + a / 2.0 } else { ln_one_minus_exp(a) };
    LogProb { ln_p, ln_1m: a }
}

#[derive(Clone, Debug, Serialize)]
pub struct RecursionTable {
    pub m_max: u32,
    /// rows[m − 1][k] = p_{k,m}, 0 ≤ k ≤ m.
    pub rows: Vec<Vec<LogProb>>,
}

impl RecursionTable {
    pub fn get(&self, k: u32, m: u32) -> Option<LogProb> {
        self.rows.get((m as usize).checked_sub(1)?)?.get(k as usize).copied()
    }
}

pub fn recursion_table(params: &BoundParams, m_max: u32) -> Result<RecursionTable> {
    params.check()?;
    if m_max == 0 {
        return Err(Error::Config("m_max must be at least 1".into()));
    }
    let j = params.j();
    let (lb, lg) = (params.p_bad.ln(), params.p_good.ln());
    let mut rows = Vec::with_capacity(m_max as usize);
    for m in 1..=m_max {
        let mut row = Vec::with_capacity(m as usize + 1);
        row.push(LogProb::from_ln_p(m as f64 * lb + params.kappa * (m - 1) as f64 * lg));
        for k in 1..m {
            let base = at_least_one(row[k as usize - 1], j);
            let phi = params.kappa * (m - k - 1) as f64 * params.ln_p(k);
            // 1 − p F = (1 − p) + p (1 − F)
            let ln_1m = log_add_exp(base.ln_1m, base.ln_p + ln_one_minus_exp(phi));
            row.push(LogProb { ln_p: base.ln_p + phi, ln_1m });
        }
        row.push(at_least_one(row[m as usize - 1], j));
        rows.push(row);
    }
    Ok(RecursionTable { m_max, rows })
}

/// Cramér rate I_p(p/2) = (1 − p/2) ln((2 − p)/(1 − p)) − ln 2.
pub fn cramer_f(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("cramer_f needs 0 <= p < 1, got {p}")));
    }
    Ok(cramer_f_ln_q(p, (-p).ln_1p()))
}

/// Same rate with ln(1 − p) supplied separately, for p within rounding of 1.
fn cramer_f_ln_q(p: f64, ln_q: f64) -> f64 {
    let h = p / 2.0;
    (1.0 - h) * ((-h).ln_1p() - ln_q) - h * std::f64::consts::LN_2
}

/// Smallest N with [3(1 − p_G)]^{N/5 − 2} ≤ 1/72.
pub fn choose_n(p_good: f64) -> Result<u32> {
    if !(p_good > 2.0 / 3.0 && p_good <= 1.0) {
        return Err(Error::Domain(format!("choose_N needs 2/3 < p_G <= 1, got {p_good}")));
    }
    let ln3q = (3.0 * (1.0 - p_good)).ln();
    let target = -(72f64.ln());
    let n = (1..=1_000_000u32)
        .find(|&n| {
            let e = n as f64 / 5.0 - 2.0;
            e > 0.0 && e * ln3q <= target + 1e-12
        })
        .ok_or_else(|| Error::Domain(format!("no N found for p_G={p_good}")))?;
    if !n_inequality(p_good, n) {
        return Err(Error::Consistency(format!("N={n} violates 8(1-p^3)^(N/5) <= (1-p)^2 at p={p_good}")));
    }
    Ok(n)
}

/// 8(1 − p³)^{N/5} ≤ (1 − p)².
pub fn n_inequality(p: f64, n: u32) -> bool {
    if p >= 1.0 {
        return true;
    }
    8f64.ln() + n as f64 / 5.0 * (-p * p * p).ln_1p() <= 2.0 * (1.0 - p).ln() + 1e-12
}

#[derive(Clone, Debug, Serialize)]
pub struct ClaimRow {
    pub m: u32,
    pub ln_q_m: f64,
    pub ln_one_minus_p_prev: f64,
    /// ln of 8N(1 − p_{m−1,m})^{ρ c L/(6N)}.
    pub final1_lhs: f64,
    pub final1: bool,
    /// Same with ρ̂ in the exponent.
    pub final1_hat_lhs: f64,
    pub final1_hat: bool,
    pub ln_one_minus_p_mm: f64,
    pub final2: bool,
    /// ln of the two-term upper bound on 1 − p_{m,m}.
    pub final3_bound: f64,
    pub final3: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimalL {
    pub grid: Vec<u64>,
    /// Least grid L with (final1) and (final2) for all 2 ≤ m ≤ m_max.
    pub rho: Option<u64>,
    pub rho_hat: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClaimReport {
    pub params: BoundParams,
    pub m_max: u32,
    #[serde(rename = "N")]
    pub n: u32,
    pub j: f64,
    pub j_floor: u64,
    pub theta: ThetaValue,
    pub j_theta_kappa: f64,
    pub rows: Vec<ClaimRow>,
    pub all_final1: bool,
    pub all_final1_hat: bool,
    pub all_final2: bool,
    pub all_final3: bool,
    /// m at which (final2) first fails.
    pub final2_first_failure: Option<u32>,
    pub minimal_l: MinimalL,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// ln of the right side of the case split bound on 1 − p_{m,m}.
fn final3_bound(params: &BoundParams, m: u32) -> f64 {
    let (k, j) = (params.kappa, params.j());
    let ln_half_j = (j / 2.0).ln();
    // (1 − p_B^m)^{4 (J/2)^m ∏_{i=0}^{m−2} p_i^{κ(m−i−1)}}
    let ln_exp0 = 4f64.ln() + m as f64 * ln_half_j + (0..m.saturating_sub(1)).map(|i| k * (m - i - 1) as f64 * params.ln_p(i)).sum::<f64>();
    let first = ln_exp0.exp() * (-params.p_bad.powi(m as i32)).ln_1p();
    let mut terms = vec![first];
    for i in 1..m {
        let prod: f64 = (2..=i).map(|jj| k * (jj - 1) as f64 * params.ln_p(m - jj)).sum();
        // p = p_{m−i−1}^{iκ}, 1 − p from expm1 to keep it away from 0
        let lp = i as f64 * k * params.ln_p(m - i - 1);
        let f = cramer_f_ln_q(lp.exp(), ln_one_minus_exp(lp));
        terms.push(-(4f64.ln() + (i + 1) as f64 * ln_half_j + prod).exp() * f);
    }
    log_sum_exp(&terms)
}

fn claim_rows(params: &BoundParams, m_max: u32, n: u32) -> Result<Vec<ClaimRow>> {
    let table = recursion_table(params, m_max)?;
    let expo = |r: f64| r * params.c / 6.0 * params.l as f64 / n as f64;
    let ln8n = (8.0 * n as f64).ln();
    let mut rows = Vec::new();
    for m in 2..=m_max {
        let prev = table.get(m - 1, m).expect("in table");
        let mm = table.get(m, m).expect("in table");
        let ln_q_m = params.ln_q(m);
        let final1_lhs = ln8n + expo(params.rho) * prev.ln_1m;
        let final1_hat_lhs = ln8n + expo(params.rho_hat()) * prev.ln_1m;
        let f3 = final3_bound(params, m);
        rows.push(ClaimRow {
            m,
            ln_q_m,
            ln_one_minus_p_prev: prev.ln_1m,
            final1_lhs,
            final1: final1_lhs <= ln_q_m,
            final1_hat_lhs,
            final1_hat: final1_hat_lhs <= ln_q_m,
            ln_one_minus_p_mm: mm.ln_1m,
            final2: mm.ln_1m <= ln_q_m,
            final3_bound: f3,
            final3: f3 <= ln_q_m,
        });
    }
    Ok(rows)
}

pub const DEFAULT_L_GRID: [u64; 4] = [10_000, 100_000, 1_000_000, 10_000_000];

/// Reports (final1) in both exponent variants, (final2) and the (final3)
/// bound for 2 ≤ m ≤ m_max, plus the least L of `grid` where they hold.
pub fn check_claims(params: &BoundParams, m_max: u32, grid: &[u64]) -> Result<ClaimReport> {
    params.check()?;
    if m_max < 2 {
        return Err(Error::Config("m_max must be at least 2".into()));
    }
    let n = choose_n(params.p_good)?;
    let rows = claim_rows(params, m_max, n)?;
    let mut sorted = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut minimal = MinimalL { grid: sorted.clone(), rho: None, rho_hat: None };
    for &l in &sorted {
        let r = claim_rows(&params.with_l(l), m_max, n)?;
        let f2 = r.iter().all(|x| x.final2);
        if minimal.rho.is_none() && f2 && r.iter().all(|x| x.final1) {
            minimal.rho = Some(l);
        }
        if minimal.rho_hat.is_none() && f2 && r.iter().all(|x| x.final1_hat) {
            minimal.rho_hat = Some(l);
        }
    }
    let theta = params.theta();
    let j = params.j();
    Ok(ClaimReport {
        params: *params,
        m_max,
        n,
        j,
        j_floor: j.floor() as u64,
        theta,
        j_theta_kappa: j * theta.value.powf(params.kappa),
        all_final1: rows.iter().all(|r| r.final1),
        all_final1_hat: rows.iter().all(|r| r.final1_hat),
        all_final2: rows.iter().all(|r| r.final2),
        all_final3: rows.iter().all(|r| r.final3),
        final2_first_failure: rows.iter().find(|r| !r.final2).map(|r| r.m),
        rows,
        minimal_l: minimal,
    })
}

impl ClaimReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// m × {final1, final1_hat, final2, final3_bound} as CSV, log values.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["m", "ln_q_m", "final1_lhs", "final1", "final1_hat_lhs", "final1_hat", "ln_one_minus_p_mm", "final2", "final3_bound", "final3"])?;
        for r in &self.rows {
            wr.write_record([
                r.m.to_string(),
                fmt(r.ln_q_m),
                fmt(r.final1_lhs),
                r.final1.to_string(),
                fmt(r.final1_hat_lhs),
                r.final1_hat.to_string(),
                fmt(r.ln_one_minus_p_mm),
                r.final2.to_string(),
                fmt(r.final3_bound),
                r.final3.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(l: u64) -> BoundParams {
        BoundParams::new(0.99, 0.01, 3.0, 0.7, 1.0 / 6.0, l).unwrap()
    }

    #[test]
    fn first_row() {
        let p = params(10_000);
        let t = recursion_table(&p, 3).unwrap();
        let p01 = t.get(0, 1).unwrap();
        assert!((p01.p() - 0.01).abs() < 1e-15);
        let want = 1.0 - 0.99f64.powf(p.j());
        assert!((t.get(1, 1).unwrap().p() - want).abs() / want < 1e-12);
        assert!((t.get(0, 2).unwrap().p() - 1e-4 * 0.99f64.powi(3)).abs() < 1e-18);
    }

    #[test]
    fn recursion_matches_direct_formula() {
        let p = BoundParams::new(0.9, 0.3, 2.0, 0.8, 0.5, 400).unwrap();
        let t = recursion_table(&p, 6).unwrap();
        let j = p.j();
        for m in 1..=6u32 {
            let mut x = 0.3f64.powi(m as i32) * 0.9f64.powf(2.0 * (m - 1) as f64);
            for k in 1..m {
                x = -(j * (-x).ln_1p()).exp_m1() * p.p(k).powf(2.0 * (m - k - 1) as f64);
                let got = t.get(k, m).unwrap();
                assert!((got.p() - x).abs() <= 1e-12 * x, "k={k} m={m}");
                assert!((got.one_minus() - (1.0 - x)).abs() <= 1e-12);
            }
            let top = -(j * (-x).ln_1p()).exp_m1();
            assert!((t.get(m, m).unwrap().p() - top).abs() <= 1e-12 * top);
        }
    }

    #[test]
    fn monotone_in_j() {
        let a = recursion_table(&params(10_000), 20).unwrap();
        let b = recursion_table(&params(40_000), 20).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            for (x, y) in ra.iter().zip(rb) {
                assert!(y.ln_p >= x.ln_p);
            }
        }
    }

    #[test]
    fn tiny_probabilities_stay_finite() {
        let p = BoundParams::new(0.999, 1e-4, 3.0, 0.7, 1.0 / 6.0, 100).unwrap();
        let t = recursion_table(&p, 120).unwrap();
        let e = t.get(0, 120).unwrap();
        assert!(e.ln_p.is_finite() && e.ln_p < -1000.0);
        assert!(t.rows.iter().flatten().all(|x| x.ln_p.is_finite() && x.ln_p <= 0.0 && x.ln_1m <= 0.0));
    }

    #[test]
    fn cramer_values() {
        assert_eq!(cramer_f(0.0).unwrap(), 0.0);
        let want = 0.75 * 3f64.ln() - 2f64.ln();
        assert!((cramer_f(0.5).unwrap() - want).abs() < 1e-15);
        assert!((cramer_f(0.5).unwrap() - 0.13081).abs() < 1e-5);
        assert!(matches!(cramer_f(1.0), Err(Error::Domain(_))));
        let grid: Vec<f64> = (1..1000).map(|i| cramer_f(i as f64 / 1000.0).unwrap()).collect();
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn n_choice() {
        assert_eq!(choose_n(0.9).unwrap(), 28);
        assert!(choose_n(2.0 / 3.0).is_err());
        let mut last = u32::MAX;
        for i in 0..300 {
            let p = 0.7 + 0.3 * i as f64 / 300.0;
            let n = choose_n(p).unwrap();
            assert!(n_inequality(p, n));
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn theta_tail() {
        let t = theta(0.01);
        assert!(t.tail_bound <= 1e-15);
        let direct: f64 = (0..60).map(|k| 1.0 - 0.01f64.powi(k + 1)).product();
        assert!((t.value - direct).abs() < 1e-15);
        assert_eq!(theta(0.0).value, 1.0);
        let p = params(10_000);
        assert!(p.theta().value > 0.0 && p.theta().value <= 1.0);
        // p_k rounds to 1 quickly, so compare q_k
        assert!((1..10).all(|k| p.ln_q(k) < p.ln_q(k - 1) && p.p(k) >= p.p(k - 1)));
    }

    #[test]
    fn degenerate_j_fails_final2() {
        // J < 1 at L = 100
        let r = check_claims(&params(100), 10, &[100]).unwrap();
        assert!(r.j < 1.0);
        assert!(!r.all_final2);
        assert!(r.final2_first_failure.is_some());
    }

    #[test]
    fn report_shape() {
        let r = check_claims(&params(1_000_000), 50, &DEFAULT_L_GRID).unwrap();
        assert_eq!(r.rows.len(), 49);
        assert_eq!(r.rows[0].m, 2);
        assert!(r.rows.iter().all(|x| x.final3_bound.is_finite() || x.final3_bound == f64::NEG_INFINITY));
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 50);
    }
}

//! Certificate arithmetic.
//!
//! Two PAC-Bayes bounds hold with probability at least `1 - delta` over an
//! i.i.d. sample of size `n`, for every posterior `Q` and any prior `P` chosen
//! without that sample:
//!
//! ```text
//! conventional:  L(Q) <= L^(Q) + sqrt((KL(Q||P) + ln(n/delta)) / (2(n-1)))
//! Seeger:        kl(L^(Q) || L(Q)) <= (KL(Q||P) + ln(n/delta)) / (n-1)
//! ```
//!
//! The second is turned into a certificate by solving `kl(L^(Q) || C) = B`
//! for the largest root `C` ([`invert_kl`]). All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{CategoricalSpec, GaussianSpec};

/// Largest value the inversion searches; anything above is reported as 1.
pub const KL_INVERSION_CEILING: f64 = 1.0 - 1e-12;
/// Absolute tolerance of the inversion.
pub const KL_INVERSION_TOL: f64 = 1e-9;
pub const KL_INVERSION_MAX_NEWTON: usize = 100;
/// Certificates are reported to three decimals; an inverted bound that rounds
/// to 1.000 certifies nothing and is flagged vacuous.
pub const VACUITY_THRESHOLD: f64 = 0.9995;

/// `kl(p || q)` between Bernoulli(p) and Bernoulli(q), with `0 ln 0 = 0`.
pub fn bernoulli_kl(p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("kl({p}, {q}) outside [0, 1]")));
    }
    if (q == 0.0 && p > 0.0) || (q == 1.0 && p < 1.0) {
        return Err(Error::Domain(format!("kl({p}, {q}) is infinite")));
    }
    Ok(kl_unchecked(p, q))
}

#[inline]
fn kl_unchecked(p: f64, q: f64) -> f64 {
    let a = if p > 0.0 { p * (p / q).ln() } else { 0.0 };
    let b = if p < 1.0 { (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln() } else { 0.0 };
    (a + b).max(0.0)
}

/// Smallest `C >= p` with `kl(p || C) = budget`, or exactly 1 when even
/// `kl(p || 1 - 1e-12)` stays within the budget.
///
/// Newton's method from `p + sqrt(budget / 2)` (an upper bound on the root by
/// Pinsker's inequality), safeguarded by bisection on the bracketing interval.
pub fn invert_kl(p: f64, budget: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "train error {p} outside [0, 1]");
    assert!(budget >= 0.0, "negative budget {budget}");
    if budget == 0.0 {
        return p;
    }
    if p >= KL_INVERSION_CEILING || kl_unchecked(p, KL_INVERSION_CEILING) <= budget {
        return 1.0;
    }

    let f = |q: f64| kl_unchecked(p, q) - budget;
    let (mut lo, mut hi) = (p, KL_INVERSION_CEILING);
    let mut q = (p + (budget / 2.0).sqrt()).min(KL_INVERSION_CEILING);
    for _ in 0..KL_INVERSION_MAX_NEWTON {
        let fq = f(q);
        if fq > 0.0 {
            hi = q;
        } else {
            lo = q;
        }
        if fq == 0.0 {
            break;
        }
        let slope = (q - p) / (q * (1.0 - q));
        let mut next = q - fq / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        let step = (next - q).abs();
        q = next;
        if step < 1e-13 {
            break;
        }
    }
    // Accept q only if the root is certified to lie in [q - tol, q].
    if f(q) >= 0.0 && (q - KL_INVERSION_TOL <= p || f(q - KL_INVERSION_TOL) <= 0.0) {
        return q;
    }
    while hi - lo > 1e-3 * KL_INVERSION_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `(KL + ln(n/delta)) / (n - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundBudget {
    pub kl_qp: f64,
    pub n: usize,
    pub delta: f64,
    pub value: f64,
}

impl BoundBudget {
    pub fn new(kl_qp: f64, n: usize, delta: f64) -> Result<Self> {
        check_inputs(kl_qp, n, delta)?;
        let value = (kl_qp + (n as f64 / delta).ln()) / (n as f64 - 1.0);
        Ok(Self { kl_qp, n, delta, value })
    }
}

fn check_inputs(kl_qp: f64, n: usize, delta: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("sample size {n} < 2")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta {delta} outside (0, 1)")));
    }
    if kl_qp < 0.0 || !kl_qp.is_finite() {
        return Err(Error::Domain(format!("KL {kl_qp} must be finite and >= 0")));
    }
    Ok(())
}

/// Closed-form bound, uncapped (it can exceed 1).
pub fn conventional_bound(train_error: f64, kl_qp: f64, n: usize, delta: f64) -> Result<f64> {
    let budget = BoundBudget::new(kl_qp, n, delta)?;
    Ok(train_error + (budget.value / 2.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeegerCertificate {
    pub budget: BoundBudget,
    /// Inverted bound, capped at 1.
    pub pb_bound: f64,
    /// Conventional bound, uncapped.
    pub upper_bound: f64,
    pub vacuous: bool,
}

pub fn seeger_certificate(train_error: f64, kl_qp: f64, n: usize, delta: f64) -> Result<SeegerCertificate> {
    if !(0.0..=1.0).contains(&train_error) {
        return Err(Error::Domain(format!("train error {train_error} outside [0, 1]")));
    }
    let budget = BoundBudget::new(kl_qp, n, delta)?;
    let raw = invert_kl(train_error, budget.value);
    let vacuous = raw >= VACUITY_THRESHOLD;
    Ok(SeegerCertificate {
        budget,
        pb_bound: if vacuous { 1.0 } else { raw },
        upper_bound: train_error + (budget.value / 2.0).sqrt(),
        vacuous,
    })
}

/// How the held-out test-set bound sizes its confidence budget.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSetForm {
    /// PAC-Bayes with point-mass prior and posterior: `ln(n/delta) / (n-1)`.
    #[default]
    PacBayes,
    /// Binomial tail / Chernoff form: `ln(1/delta) / n`.
    Classic,
}

/// Certificate for a fixed model from its error on `n_val` held-out points,
/// capped at 1.
pub fn test_set_bound(val_error: f64, n_val: usize, delta: f64, form: TestSetForm) -> Result<f64> {
    if !(0.0..=1.0).contains(&val_error) {
        return Err(Error::Domain(format!("validation error {val_error} outside [0, 1]")));
    }
    let budget = match form {
        TestSetForm::PacBayes => BoundBudget::new(0.0, n_val, delta)?.value,
        TestSetForm::Classic => {
            check_inputs(0.0, n_val, delta)?;
            (1.0 / delta).ln() / n_val as f64
        }
    };
    Ok(invert_kl(val_error, budget).min(1.0))
}

/// `KL(N(mu_q, s_q I) || N(mu_p, s_p I))`.
pub fn gaussian_kl(q: &GaussianSpec, p: &GaussianSpec) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::Structure(format!(
            "Gaussian dimensions {} and {} differ",
            q.dim(),
            p.dim()
        )));
    }
    let d = q.dim() as f64;
    let ratio = q.variance / p.variance;
    let dist2: f64 = q.mean.iter().zip(&p.mean).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((0.5 * d * (ratio - 1.0 - ratio.ln())).max(0.0) + dist2 / (2.0 * p.variance))
}

/// `KL(Cat(q) || Uniform(M))` = `sum q_i ln q_i + ln M`.
pub fn categorical_kl_uniform(q: &CategoricalSpec) -> f64 {
    let m = q.probs.len() as f64;
    let neg_entropy: f64 = q.probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum();
    (neg_entropy + m.ln()).clamp(0.0, m.ln())
}

/// KL of a point mass on one of `m` atoms against the uniform prior.
pub fn point_mass_kl(m: usize) -> f64 {
    (m as f64).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scheme: String,
    pub objective: String,
    pub seeds: Vec<(String, u64)>,
    pub config_hash: String,
}

/// One certified result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub task: String,
    /// Empirical risk the bound is computed from.
    pub train_error: f64,
    pub test_error: Option<f64>,
    pub pb_bound: f64,
    pub upper_bound: f64,
    pub kl_qp: f64,
    pub n: usize,
    pub delta: f64,
    pub certified_gap: f64,
    pub vacuous: bool,
    /// Posterior mean (or selected point) of the merge coefficients.
    pub phi: Vec<f64>,
    pub provenance: Provenance,
}

impl CertificateRecord {
    pub fn from_seeger(
        task: impl Into<String>,
        train_error: f64,
        test_error: Option<f64>,
        cert: &SeegerCertificate,
        phi: Vec<f64>,
        provenance: Provenance,
    ) -> Self {
        Self {
            task: task.into(),
            train_error,
            test_error,
            pb_bound: cert.pb_bound,
            upper_bound: cert.upper_bound,
            kl_qp: cert.budget.kl_qp,
            n: cert.budget.n,
            delta: cert.budget.delta,
            certified_gap: cert.pb_bound - train_error,
            vacuous: cert.vacuous,
            phi,
            provenance,
        }
    }

    /// Recomputes the certificate from the stored `(train_error, kl_qp, n,
    /// delta)` and checks the stored bounds against it.
    pub fn revalidate(&self, tol: f64) -> Result<()> {
        let fresh = seeger_certificate(self.train_error, self.kl_qp, self.n, self.delta)?;
        let ok = (fresh.pb_bound - self.pb_bound).abs() <= tol
            && (fresh.upper_bound - self.upper_bound).abs() <= tol
            && fresh.vacuous == self.vacuous;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{}: stored pb_bound {} / upper {} disagree with recomputed {} / {}",
                self.task, self.pb_bound, self.upper_bound, fresh.pb_bound, fresh.upper_bound
            )))
        }
    }
}

//! Distribution-level authentication through Hadamard test functions. A
//! verifier enrolls a probability fingerprint of the device, then issues
//! parity challenges BIT ∈ {0,1}^L; the prover must return values close to
//! the fingerprint expectations u_BIT = Σ_x p̂(x)(−1)^{⟨BIT,h(x)⟩}. Includes
//! the honest prover (one SQ query per round) and two adversary models: a
//! budgeted table-lookup attacker and the full inverse-transform
//! reconstruction attacker with simplex projection.

use std::collections::HashMap;

use rand::Rng;

use crate::distributions::{OutputDistribution, TestFunction};
use crate::oracles::{empirical_frequencies, stat_query, StatOracle};
use crate::experiments::format_float;
use crate::{Error, Result};

/// Rank of a set of L-bit words over F₂, by Gaussian elimination.
pub fn f2_rank(codes: &[u64], l: usize) -> usize {
    let mut pivots: Vec<u64> = Vec::new();
    for &code in codes {
        let mut row = code;
        for &p in &pivots {
            let lead = 63 - p.leading_zeros() as usize;
            if row >> lead & 1 == 1 {
                row ^= p;
            }
        }
        if row != 0 {
            pivots.push(row);
            if pivots.len() == l {
                break;
            }
        }
    }
    pivots.len()
}

/// Public injective encoding h: X → {0,1}^L with certified full F₂ rank, so
/// the parity family separates outcomes.
#[derive(Clone, Debug)]
pub struct Encoding {
    labels: Vec<String>,
    codes: Vec<u64>,
    l: usize,
}

impl Encoding {
    pub fn new(labels: Vec<String>, codes: Vec<u64>, l: usize) -> Result<Self> {
        if labels.len() != codes.len() {
            return Err(Error::Dimension {
                context: "Encoding",
                expected: labels.len(),
                got: codes.len(),
            });
        }
        if l == 0 || l >= 64 {
            return Err(Error::Invalid {
                context: "Encoding",
                message: format!("bit length must be in 1..64, got {l}"),
            });
        }
        if labels.len() < l {
            return Err(Error::Invalid {
                context: "Encoding",
                message: format!("|X| = {} cannot span {l} bits", labels.len()),
            });
        }
        if codes.iter().any(|&c| c >> l != 0) {
            return Err(Error::Invalid {
                context: "Encoding",
                message: "code exceeds the declared bit length".into(),
            });
        }
        let mut sorted = codes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != codes.len() {
            return Err(Error::Invalid {
                context: "Encoding",
                message: "encoding must be injective".into(),
            });
        }
        let rank = f2_rank(&codes, l);
        if rank != l {
            return Err(Error::Invalid {
                context: "Encoding",
                message: format!("encoding has F₂ rank {rank}, need full rank {l}"),
            });
        }
        Ok(Self { labels, codes, l })
    }

    /// Index-binary encoding h(x_i) = i, the default for L = ⌈log₂|X|⌉.
    pub fn default_index(labels: Vec<String>, l: usize) -> Result<Self> {
        let codes = (0..labels.len() as u64).collect();
        Self::new(labels, codes, l)
    }

    /// Random injective encoding into a (possibly inflated) challenge space;
    /// resamples until the rank certificate passes.
    pub fn random(labels: Vec<String>, l: usize, rng: &mut impl Rng) -> Result<Self> {
        if l >= 64 || labels.len() > 1usize << l.min(63) {
            return Err(Error::Invalid {
                context: "Encoding",
                message: format!("cannot embed {} outcomes in {l} bits", labels.len()),
            });
        }
        for _ in 0..256 {
            let mut seen = std::collections::HashSet::new();
            let codes: Vec<u64> = (0..labels.len())
                .map(|_| loop {
                    let c = rng.random_range(0..1u64 << l);
                    if seen.insert(c) {
                        return c;
                    }
                })
                .collect();
            if f2_rank(&codes, l) == l {
                return Self::new(labels.clone(), codes, l);
            }
        }
        Err(Error::Numerical {
            context: "Encoding",
            message: "random encoding failed to reach full rank".into(),
        })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn codes(&self) -> &[u64] {
        &self.codes
    }

    pub fn f2_rank(&self) -> usize {
        self.l // enforced at construction
    }

    pub fn challenge_space(&self) -> u64 {
        1u64 << self.l
    }
}

/// Parity test function φ_BIT(x) = (−1)^{⟨BIT, h(x)⟩}.
pub fn phi_bit(bits: u64, enc: &Encoding) -> Result<TestFunction> {
    if bits >> enc.l() != 0 {
        return Err(Error::Invalid {
            context: "phi_bit",
            message: format!("challenge {bits:#x} exceeds {} bits", enc.l()),
        });
    }
    TestFunction::new(
        enc.codes()
            .iter()
            .map(|&c| if (bits & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WhtDirection {
    Forward,
    Inverse,
}

/// Fast Walsh–Hadamard butterfly. Forward at index BIT computes
/// Σ_z (−1)^{⟨BIT,z⟩} f(z); the inverse carries the 2^{−L} factor so
/// inverse∘forward is the identity.
pub fn wht(values: &[f64], direction: WhtDirection) -> Result<Vec<f64>> {
    let n = values.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Invalid {
            context: "wht",
            message: format!("length must be a power of two, got {n}"),
        });
    }
    let mut v = values.to_vec();
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for j in block..block + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
    if direction == WhtDirection::Inverse {
        let scale = 1.0 / n as f64;
        v.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(v)
}

/// Both sides of the parity-family Parseval identity:
/// 2^{−L} Σ_BIT (p[φ_BIT] − q[φ_BIT])² = Σ_x (p(x) − q(x))².
/// The left side is evaluated through test-function expectations, the right
/// directly, so the returned pair is an independent cross-check.
pub fn parseval_check(
    p: &OutputDistribution,
    q: &OutputDistribution,
    enc: &Encoding,
) -> Result<(f64, f64)> {
    if p.labels() != enc.labels() || q.labels() != enc.labels() {
        return Err(Error::Invalid {
            context: "parseval_check",
            message: "distributions must share the encoding's outcome set".into(),
        });
    }
    let mut lhs = 0.0;
    for bits in 0..enc.challenge_space() {
        let phi = phi_bit(bits, enc)?;
        let d = crate::distributions::expectation(p, &phi)?
            - crate::distributions::expectation(q, &phi)?;
        lhs += d * d;
    }
    lhs /= enc.challenge_space() as f64;
    let rhs = p
        .values()
        .iter()
        .zip(q.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((lhs, rhs))
}

/// Enrollment shot count ⌈ln(2|X|/δ_puf)/(2η²)⌉: a Hoeffding union bound
/// making every frequency η-accurate except with probability δ_puf.
pub fn hoeffding_shots(card_x: usize, eta: f64, delta_puf: f64) -> u64 {
    assert!(eta > 0.0 && delta_puf > 0.0 && delta_puf < 1.0 && card_x >= 1);
    ((2.0 * card_x as f64 / delta_puf).ln() / (2.0 * eta * eta)).ceil() as u64
}

/// The verifier's stored estimate of the device distribution.
#[derive(Clone, Debug)]
pub struct ProbabilityFingerprint {
    labels: Vec<String>,
    values: Vec<f64>,
    pub eta: f64,
    pub delta_puf: f64,
    pub shots_used: u64,
}

impl ProbabilityFingerprint {
    pub fn new(
        labels: Vec<String>,
        values: Vec<f64>,
        eta: f64,
        delta_puf: f64,
        shots_used: u64,
    ) -> Result<Self> {
        let total: f64 = values.iter().sum();
        let slack = labels.len() as f64 * eta + 1e-9;
        if (total - 1.0).abs() > slack {
            return Err(Error::Invalid {
                context: "ProbabilityFingerprint",
                message: format!("values sum to {total}, beyond 1 ± |X|·η = 1 ± {slack:.3e}"),
            });
        }
        Ok(Self {
            labels,
            values,
            eta,
            delta_puf,
            shots_used,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn expectation(&self, phi: &TestFunction) -> Result<f64> {
        if phi.len() != self.values.len() {
            return Err(Error::Dimension {
                context: "ProbabilityFingerprint",
                expected: self.values.len(),
                got: phi.len(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(phi.values())
            .map(|(p, v)| p * v)
            .sum())
    }
}

/// Exact enrollment: copy the true distribution (η = 0, no shots).
pub fn enroll_exact(dist: &OutputDistribution, delta_puf: f64) -> Result<ProbabilityFingerprint> {
    ProbabilityFingerprint::new(
        dist.labels().to_vec(),
        dist.values().to_vec(),
        0.0,
        delta_puf,
        0,
    )
}

/// Sampled enrollment: draw T = ⌈ln(2|X|/δ_puf)/(2η²)⌉ outcomes and store
/// empirical frequencies.
pub fn enroll_sampled(
    dist: &OutputDistribution,
    eta: f64,
    delta_puf: f64,
    rng: &mut impl Rng,
) -> Result<ProbabilityFingerprint> {
    let shots = hoeffding_shots(dist.len(), eta, delta_puf);
    let freqs = empirical_frequencies(dist.values(), shots, rng)?;
    ProbabilityFingerprint::new(dist.labels().to_vec(), freqs, eta, delta_puf, shots)
}

/// A prover: anything that can answer a parity challenge.
pub trait Responder {
    fn respond(&mut self, bits: u64) -> Result<f64>;
}

impl<F: FnMut(u64) -> Result<f64>> Responder for F {
    fn respond(&mut self, bits: u64) -> Result<f64> {
        self(bits)
    }
}

/// One authentication round.
#[derive(Clone, Copy, Debug)]
pub struct Round {
    pub bits: u64,
    pub target: f64,
    pub response: f64,
    pub accepted: bool,
}

/// Full authentication session; verdict is the conjunction of the rounds.
#[derive(Clone, Debug)]
pub struct Transcript {
    pub rounds: Vec<Round>,
    pub verdict: bool,
    pub tau: f64,
    pub c0: f64,
    pub n_chal: usize,
    pub bit_length: usize,
}

impl Transcript {
    /// Line-oriented log: '#' parameter lines, then one round per line as
    /// "BIT-hex target response accept-flag".
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# tau = {}\n", format_float(self.tau)));
        out.push_str(&format!("# c0 = {}\n", format_float(self.c0)));
        out.push_str(&format!("# n_chal = {}\n", self.n_chal));
        out.push_str(&format!("# verdict = {}\n", u8::from(self.verdict)));
        let width = self.bit_length.div_ceil(4).max(1);
        for r in &self.rounds {
            out.push_str(&format!(
                "{:0width$x} {} {} {}\n",
                r.bits,
                format_float(r.target),
                format_float(r.response),
                u8::from(r.accepted),
            ));
        }
        out
    }
}

/// Run an authentication session with the protocol constant C₀ = 2: a
/// round accepts iff |v_r − u_r| ≤ 2τ. A responder error is recorded as a
/// rejected round with a NaN response.
pub fn run_authentication(
    fingerprint: &ProbabilityFingerprint,
    responder: &mut dyn Responder,
    enc: &Encoding,
    tau: f64,
    n_chal: usize,
    rng: &mut impl Rng,
) -> Result<Transcript> {
    run_authentication_with_c0(fingerprint, responder, enc, tau, 2.0, n_chal, rng)
}

/// Same protocol with an explicit acceptance constant, for sensitivity runs.
pub fn run_authentication_with_c0(
    fingerprint: &ProbabilityFingerprint,
    responder: &mut dyn Responder,
    enc: &Encoding,
    tau: f64,
    c0: f64,
    n_chal: usize,
    rng: &mut impl Rng,
) -> Result<Transcript> {
    if fingerprint.labels() != enc.labels() {
        return Err(Error::Invalid {
            context: "run_authentication",
            message: "fingerprint and encoding outcome sets differ".into(),
        });
    }
    let mut rounds = Vec::with_capacity(n_chal);
    let mut verdict = true;
    for _ in 0..n_chal {
        let bits = rng.random_range(0..enc.challenge_space());
        let target = fingerprint.expectation(&phi_bit(bits, enc)?)?;
        let (response, accepted) = match responder.respond(bits) {
            Ok(v) => (v, (v - target).abs() <= c0 * tau),
            Err(_) => (f64::NAN, false),
        };
        verdict &= accepted;
        rounds.push(Round {
            bits,
            target,
            response,
            accepted,
        });
    }
    Ok(Transcript {
        rounds,
        verdict,
        tau,
        c0,
        n_chal,
        bit_length: enc.l(),
    })
}

/// Honest prover: one SQ query per challenge, straight to the device.
pub struct HonestProver {
    oracle: StatOracle,
    enc: Encoding,
}

impl HonestProver {
    pub fn new(oracle: StatOracle, enc: Encoding) -> Result<Self> {
        if oracle.outcome_labels() != enc.labels() {
            return Err(Error::Invalid {
                context: "HonestProver",
                message: "oracle and encoding outcome sets differ".into(),
            });
        }
        Ok(Self { oracle, enc })
    }

    pub fn queries_made(&self) -> u64 {
        self.oracle.count()
    }
}

impl Responder for HonestProver {
    fn respond(&mut self, bits: u64) -> Result<f64> {
        stat_query(&mut self.oracle, &phi_bit(bits, &self.enc)?)
    }
}

/// Budgeted attacker: q attack-phase queries on uniformly chosen distinct
/// challenges, cached; authentication answers from the cache only, with a
/// fixed fallback on a miss (0 by default — the midpoint of the range).
pub struct TableLookupAdversary {
    cache: HashMap<u64, f64>,
    miss_value: f64,
}

impl TableLookupAdversary {
    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }
}

pub fn table_lookup_adversary(
    oracle: &mut StatOracle,
    enc: &Encoding,
    q: usize,
    miss_value: f64,
    rng: &mut impl Rng,
) -> Result<TableLookupAdversary> {
    let space = enc.challenge_space();
    let q = q.min(space as usize);
    let picks: Vec<u64> = if q == space as usize {
        (0..space).collect()
    } else {
        rand::seq::index::sample(rng, space as usize, q)
            .into_iter()
            .map(|i| i as u64)
            .collect()
    };
    let mut cache = HashMap::with_capacity(q);
    for bits in picks {
        let v = stat_query(oracle, &phi_bit(bits, enc)?)?;
        cache.insert(bits, v);
    }
    Ok(TableLookupAdversary { cache, miss_value })
}

impl Responder for TableLookupAdversary {
    fn respond(&mut self, bits: u64) -> Result<f64> {
        Ok(*self.cache.get(&bits).unwrap_or(&self.miss_value))
    }
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
/// Nonexpansive, output nonnegative with unit sum.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut lambda = 0.0;
    for (k, val) in sorted.iter().enumerate() {
        cumulative += val;
        let t = (1.0 - cumulative) / (k + 1) as f64;
        if val + t > 0.0 {
            lambda = t;
        }
    }
    v.iter().map(|x| (x + lambda).max(0.0)).collect()
}

/// Full-table learning attacker: queries every challenge, inverts the
/// transform, restricts to the encoded support, and projects onto the
/// simplex. Returns the responder and its reconstructed distribution.
pub struct ReconstructionAdversary {
    dist: OutputDistribution,
    enc: Encoding,
}

impl Responder for ReconstructionAdversary {
    fn respond(&mut self, bits: u64) -> Result<f64> {
        crate::distributions::expectation(&self.dist, &phi_bit(bits, &self.enc)?)
    }
}

pub fn reconstruction_adversary(
    oracle: &mut StatOracle,
    enc: &Encoding,
) -> Result<(ReconstructionAdversary, OutputDistribution)> {
    let space = enc.challenge_space() as usize;
    let mut answers = Vec::with_capacity(space);
    for bits in 0..space as u64 {
        answers.push(stat_query(oracle, &phi_bit(bits, enc)?)?);
    }
    let full = wht(&answers, WhtDirection::Inverse)?;
    let restricted: Vec<f64> = enc.codes().iter().map(|&c| full[c as usize]).collect();
    let projected = project_to_simplex(&restricted);
    let dist = OutputDistribution::new(enc.labels().to_vec(), projected)?;
    Ok((
        ReconstructionAdversary {
            dist: dist.clone(),
            enc: enc.clone(),
        },
        dist,
    ))
}

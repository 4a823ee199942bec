//! Human preference data and a feature-based reward model trained on
//! pairwise comparisons, plus rater gating, FEVER-derived comparisons and
//! confidence intervals for reported proportions.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::syntax::{InlineEvidenceResponse, SyntaxError, MIN_QUOTE_TOKENS};
use crate::text::{tfidf_cosine, words};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Error)]
pub enum PreferenceError {
    #[error("no judgments to vote on")]
    EmptyJudgments,
    #[error("every rating is Unsure; nothing to train on")]
    NoTrainingSignal,
    #[error("no gold rating has a non-tie preference")]
    NoComparableItems,
    #[error("invalid counts: {successes} successes out of {n}")]
    InvalidCounts { successes: u64, n: u64 },
    #[error("claim {0} has no evidence")]
    EmptyEvidence(usize),
    #[error("fake quotes need evidence from at least one other page")]
    NoFakeQuoteSource,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported weights file version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    PreferA,
    PreferB,
    TieGood,
    TieBad,
    Unsure,
}

impl Preference {
    /// Target probability that A is preferred; `None` for Unsure.
    pub fn target(self) -> Option<f64> {
        match self {
            Preference::PreferA => Some(1.0),
            Preference::PreferB => Some(0.0),
            Preference::TieGood | Preference::TieBad => Some(0.5),
            Preference::Unsure => None,
        }
    }

    pub fn is_tie(self) -> bool {
        matches!(self, Preference::TieGood | Preference::TieBad)
    }
}

/// One rater's judgment of a pair of answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub question_id: String,
    pub rater_id: String,
    pub plausible_a: bool,
    pub plausible_b: bool,
    pub supported_a: bool,
    pub supported_b: bool,
    pub preference: Preference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    #[serde(default)]
    pub question_id: String,
    pub question: String,
    pub response_a: InlineEvidenceResponse,
    pub response_b: InlineEvidenceResponse,
    #[serde(default)]
    pub ratings: Vec<Rating>,
}

/// Strict majority; an exact tie is `false`.
pub fn majority_vote(judgments: &[bool]) -> Result<bool, PreferenceError> {
    if judgments.is_empty() {
        return Err(PreferenceError::EmptyJudgments);
    }
    let yes = judgments.iter().filter(|&&j| j).count();
    Ok(2 * yes > judgments.len())
}

pub const FEATURE_DIM: usize = 10;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "log_claim_words",
    "log_quote_words",
    "short_quote",
    "cos_question_claim",
    "cos_claim_quote",
    "cos_question_quote",
    "question_words_in_claim",
    "claim_words_in_quote",
    "syntax_ok",
    "bias",
];

/// Fraction of the distinct words of `of` that also occur in `within`.
fn overlap(of: &str, within: &str) -> f64 {
    let a: HashSet<String> = words(of).into_iter().collect();
    if a.is_empty() {
        return 0.0;
    }
    let b: HashSet<String> = words(within).into_iter().collect();
    a.iter().filter(|w| b.contains(*w)).count() as f64 / a.len() as f64
}

/// Features in [`FEATURE_NAMES`] order. Cosines use TF-IDF with smoothed
/// IDF over the three texts (question, claim, quote). `syntax_ok` is 1 when
/// the claim is non-empty and the quote is long enough; the scorer never sees
/// the source documents.
pub fn featurize(question: &str, resp: &InlineEvidenceResponse) -> [f64; FEATURE_DIM] {
    let (claim, quote) = (resp.claim(), resp.quote());
    let units = [question, claim, quote];
    let short = Tokenizer::new().count(quote) < MIN_QUOTE_TOKENS;
    let ok = !claim.is_empty() && !quote.is_empty() && !short;
    [
        (1.0 + words(claim).len() as f64).ln(),
        (1.0 + words(quote).len() as f64).ln(),
        f64::from(u8::from(short)),
        tfidf_cosine(question, claim, &units),
        tfidf_cosine(claim, quote, &units),
        tfidf_cosine(question, quote, &units),
        overlap(question, claim),
        overlap(claim, quote),
        f64::from(u8::from(ok)),
        1.0,
    ]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Anything that turns (question, response) into a scalar reward.
pub trait RewardModel: Send + Sync {
    fn reward(&self, question: &str, resp: &InlineEvidenceResponse) -> f64;
}

/// Linear reward model over [`featurize`], with a second linear head that
/// predicts whether a response is both supported and plausible.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceScorer {
    pub weights: Vec<f64>,
    pub aux_weights: Vec<f64>,
}

const WEIGHTS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    version: u32,
    feature_names: Vec<String>,
    weights: Vec<f64>,
    aux_weights: Vec<f64>,
}

impl PreferenceScorer {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            aux_weights: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score_features(&self, f: &[f64]) -> f64 {
        dot(&self.weights, f)
    }

    pub fn aux_features(&self, f: &[f64]) -> f64 {
        sigmoid(dot(&self.aux_weights, f))
    }

    /// P(supported and plausible) from the auxiliary head.
    pub fn aux_probability(&self, question: &str, resp: &InlineEvidenceResponse) -> f64 {
        self.aux_features(&featurize(question, resp))
    }

    /// `sigma(s_A - s_B)`.
    pub fn preference_probability(
        &self,
        question: &str,
        a: &InlineEvidenceResponse,
        b: &InlineEvidenceResponse,
    ) -> f64 {
        sigmoid(score(self, question, a) - score(self, question, b))
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), PreferenceError> {
        let file = WeightsFile {
            version: WEIGHTS_VERSION,
            feature_names: if self.dim() == FEATURE_DIM {
                FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
            } else {
                Vec::new()
            },
            weights: self.weights.clone(),
            aux_weights: self.aux_weights.clone(),
        };
        serde_json::to_writer_pretty(w, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, PreferenceError> {
        let file: WeightsFile = serde_json::from_reader(r)?;
        if file.version != WEIGHTS_VERSION {
            return Err(PreferenceError::UnsupportedVersion(file.version));
        }
        if file.aux_weights.len() != file.weights.len() {
            return Err(PreferenceError::DimensionMismatch {
                expected: file.weights.len(),
                got: file.aux_weights.len(),
            });
        }
        Ok(Self {
            weights: file.weights,
            aux_weights: file.aux_weights,
        })
    }
}

impl RewardModel for PreferenceScorer {
    fn reward(&self, question: &str, resp: &InlineEvidenceResponse) -> f64 {
        score(self, question, resp)
    }
}

/// `weights · featurize(question, resp)`.
pub fn score(scorer: &PreferenceScorer, question: &str, resp: &InlineEvidenceResponse) -> f64 {
    scorer.score_features(&featurize(question, resp))
}

/// How several raters' preferences collapse into one training target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelAggregation {
    /// Most frequent target; a tie between targets becomes 0.5.
    #[default]
    Plurality,
    /// Mean of the raters' targets.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Initial weights are drawn from uniform(-init_scale, init_scale).
    pub init_scale: f64,
    pub labels: LabelAggregation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.5,
            epochs: 500,
            seed: 0,
            init_scale: 0.01,
            labels: LabelAggregation::Plurality,
        }
    }
}

/// A featurized comparison. Missing labels contribute nothing to the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub features_a: Vec<f64>,
    pub features_b: Vec<f64>,
    /// Target P(A preferred).
    pub target: Option<f64>,
    pub aux_a: Option<bool>,
    pub aux_b: Option<bool>,
}

fn aggregate(targets: &[f64], mode: LabelAggregation) -> Option<f64> {
    if targets.is_empty() {
        return None;
    }
    Some(match mode {
        LabelAggregation::Mean => targets.iter().sum::<f64>() / targets.len() as f64,
        LabelAggregation::Plurality => {
            let count = |t: f64| targets.iter().filter(|&&x| x == t).count();
            let counts = [(1.0, count(1.0)), (0.0, count(0.0)), (0.5, count(0.5))];
            let top = counts.iter().map(|c| c.1).max().unwrap_or(0);
            let winners: Vec<f64> = counts.iter().filter(|c| c.1 == top).map(|c| c.0).collect();
            if winners.len() == 1 {
                winners[0]
            } else {
                0.5
            }
        }
    })
}

/// Labels for one record: the aggregated preference target and the
/// majority-voted supported-and-plausible label of each side. Unsure
/// ratings are left out of all three.
pub fn record_labels(
    ratings: &[Rating],
    mode: LabelAggregation,
) -> (Option<f64>, Option<bool>, Option<bool>) {
    let sure: Vec<&Rating> = ratings.iter().filter(|r| r.preference != Preference::Unsure).collect();
    let targets: Vec<f64> = sure.iter().filter_map(|r| r.preference.target()).collect();
    let aux = |supported: fn(&Rating) -> bool, plausible: fn(&Rating) -> bool| {
        let s: Vec<bool> = sure.iter().map(|r| supported(r)).collect();
        let p: Vec<bool> = sure.iter().map(|r| plausible(r)).collect();
        Some(majority_vote(&s).ok()? && majority_vote(&p).ok()?)
    };
    (
        aggregate(&targets, mode),
        aux(|r| r.supported_a, |r| r.plausible_a),
        aux(|r| r.supported_b, |r| r.plausible_b),
    )
}

pub fn training_pairs(records: &[ComparisonRecord], mode: LabelAggregation) -> Vec<TrainingPair> {
    records
        .iter()
        .map(|rec| {
            let (target, aux_a, aux_b) = record_labels(&rec.ratings, mode);
            TrainingPair {
                features_a: featurize(&rec.question, &rec.response_a).to_vec(),
                features_b: featurize(&rec.question, &rec.response_b).to_vec(),
                target,
                aux_a,
                aux_b,
            }
        })
        .collect()
}

/// `L = L_pref / 2 + L_aux / 2`, each term a mean cross-entropy over the
/// labelled items, with its gradient.
pub fn loss_and_gradient(scorer: &PreferenceScorer, pairs: &[TrainingPair]) -> (f64, PreferenceScorer) {
    let dim = scorer.dim();
    let mut grad = PreferenceScorer::zeros(dim);
    let (mut pref_loss, mut n_pref) = (0.0, 0usize);
    let (mut aux_loss, mut n_aux) = (0.0, 0usize);
    let mut pref_grad = vec![0.0; dim];
    let mut aux_grad = vec![0.0; dim];
    for p in pairs {
        if let Some(t) = p.target {
            let diff: Vec<f64> = p.features_a.iter().zip(&p.features_b).map(|(a, b)| a - b).collect();
            let d = dot(&scorer.weights, &diff);
            pref_loss += softplus(d) - t * d;
            let g = sigmoid(d) - t;
            for (acc, x) in pref_grad.iter_mut().zip(&diff) {
                *acc += g * x;
            }
            n_pref += 1;
        }
        for (label, f) in [(p.aux_a, &p.features_a), (p.aux_b, &p.features_b)] {
            if let Some(y) = label {
                let y = f64::from(u8::from(y));
                let z = dot(&scorer.aux_weights, f);
                aux_loss += softplus(z) - y * z;
                let g = sigmoid(z) - y;
                for (acc, x) in aux_grad.iter_mut().zip(f) {
                    *acc += g * x;
                }
                n_aux += 1;
            }
        }
    }
    let mut loss = 0.0;
    if n_pref > 0 {
        let k = 0.5 / n_pref as f64;
        loss += k * pref_loss;
        grad.weights = pref_grad.iter().map(|g| k * g).collect();
    }
    if n_aux > 0 {
        let k = 0.5 / n_aux as f64;
        loss += k * aux_loss;
        grad.aux_weights = aux_grad.iter().map(|g| k * g).collect();
    }
    (loss, grad)
}

/// Full-batch gradient descent on [`loss_and_gradient`].
pub fn train_on_features(
    pairs: &[TrainingPair],
    dim: usize,
    config: &TrainConfig,
) -> Result<PreferenceScorer, PreferenceError> {
    if !pairs.iter().any(|p| p.target.is_some()) {
        return Err(PreferenceError::NoTrainingSignal);
    }
    for p in pairs {
        for f in [&p.features_a, &p.features_b] {
            if f.len() != dim {
                return Err(PreferenceError::DimensionMismatch { expected: dim, got: f.len() });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut init = |_| {
        if config.init_scale > 0.0 {
            rng.gen_range(-config.init_scale..config.init_scale)
        } else {
            0.0
        }
    };
    let mut scorer = PreferenceScorer {
        weights: (0..dim).map(&mut init).collect(),
        aux_weights: (0..dim).map(&mut init).collect(),
    };
    for _ in 0..config.epochs {
        let (_, grad) = loss_and_gradient(&scorer, pairs);
        for (w, g) in scorer.weights.iter_mut().zip(&grad.weights) {
            *w -= config.lr * g;
        }
        for (w, g) in scorer.aux_weights.iter_mut().zip(&grad.aux_weights) {
            *w -= config.lr * g;
        }
    }
    Ok(scorer)
}

pub fn train_pairwise(records: &[ComparisonRecord], config: &TrainConfig) -> Result<PreferenceScorer, PreferenceError> {
    train_on_features(&training_pairs(records, config.labels), FEATURE_DIM, config)
}

/// Fraction of gold non-tie preferences that `ratings` reproduce, matching
/// ratings to gold by question id.
pub fn rater_agreement(ratings: &[Rating], gold: &[Rating]) -> Result<f64, PreferenceError> {
    let (mut matched, mut total) = (0usize, 0usize);
    for g in gold {
        if g.preference.is_tie() || g.preference == Preference::Unsure {
            continue;
        }
        let Some(r) = ratings.iter().find(|r| r.question_id == g.question_id) else {
            continue;
        };
        total += 1;
        matched += usize::from(r.preference == g.preference);
    }
    if total == 0 {
        return Err(PreferenceError::NoComparableItems);
    }
    Ok(matched as f64 / total as f64)
}

pub const SUPER_RATER_THRESHOLD: f64 = 0.85;

pub fn super_rater_gate(ratings: &[Rating], gold: &[Rating]) -> Result<bool, PreferenceError> {
    Ok(rater_agreement(ratings, gold)? >= SUPER_RATER_THRESHOLD)
}

/// `(p, z * sqrt(p (1 - p) / n))` with `p = successes / n`.
pub fn proportion_ci(successes: u64, n: u64, z: f64) -> Result<(f64, f64), PreferenceError> {
    if n == 0 || successes > n {
        return Err(PreferenceError::InvalidCounts { successes, n });
    }
    let p = successes as f64 / n as f64;
    Ok((p, z * (p * (1.0 - p) / n as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeverLabel {
    Supported,
    Refuted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeverEvidence {
    pub title: String,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeverClaim {
    pub claim: String,
    pub label: FeverLabel,
    pub evidence: Vec<FeverEvidence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeverKind {
    A,
    B,
    A2,
    B2,
}

/// Turns a declarative claim into a question.
pub trait ClaimToQuestion {
    fn question(&self, claim: &str) -> String;
}

/// Splits at the first copula: "X is Y." becomes "Who or what is X?".
/// Claims without one fall back to "Is it true that ...?".
#[derive(Debug, Clone, Copy, Default)]
pub struct CopulaQuestion;

impl ClaimToQuestion for CopulaQuestion {
    fn question(&self, claim: &str) -> String {
        let claim = strip_period(claim);
        for copula in [" is ", " was ", " are ", " were "] {
            if let Some(pos) = claim.find(copula) {
                let subject = &claim[..pos];
                if !subject.is_empty() {
                    return format!("Who or what {} {subject}?", copula.trim());
                }
            }
        }
        format!("Is it true that {claim}?")
    }
}

fn strip_period(claim: &str) -> &str {
    claim.trim().trim_end_matches('.')
}

const QUESTION_TEMPLATES: [&str; 4] = [
    "{claim}?",
    "Is it true that {claim}?",
    "Is it correct to say that {claim}?",
    "{claim}. Do you agree?",
];
const AFFIRMATIVE: [&str; 3] = ["Yes", "This is correct", "It is true"];
const NEGATIVE: [&str; 3] = ["No", "This is not correct", "It is not true"];

pub const FEVER_RATER_ID: &str = "fever-template";

struct Side {
    resp: InlineEvidenceResponse,
    supported: bool,
    plausible: bool,
}

/// Builds one synthetic comparison per claim.
///
/// Type A asks a templated yes/no question and pits the affirmative against
/// the negative answer, both quoting the real evidence. Type B asks the
/// transformed question and pits the claim against "It is not true that
/// {claim}". A2 and B2 keep the correct answer of A and B on both sides and
/// swap the evidence on one side for a fake quote stitched from sentences of
/// other pages. The preferred side is placed at random.
pub fn fever_augment<R: Rng + ?Sized>(
    claims: &[FeverClaim],
    kind: FeverKind,
    to_question: &dyn ClaimToQuestion,
    rng: &mut R,
) -> Result<Vec<ComparisonRecord>, PreferenceError> {
    if let Some(i) = claims.iter().position(|c| c.evidence.is_empty()) {
        return Err(PreferenceError::EmptyEvidence(i));
    }
    let mut out = Vec::with_capacity(claims.len());
    for (i, c) in claims.iter().enumerate() {
        let ev = &c.evidence[0];
        let supported = c.label == FeverLabel::Supported;
        let claim = strip_period(&c.claim);
        let (question, good_claim, bad_claim) = match kind {
            FeverKind::A | FeverKind::A2 => {
                let t = QUESTION_TEMPLATES.choose(rng).expect("nonempty");
                let k = rng.gen_range(0..AFFIRMATIVE.len());
                let (yes, no) = (format!("{}.", AFFIRMATIVE[k]), format!("{}.", NEGATIVE[k]));
                let q = t.replace("{claim}", claim);
                if supported {
                    (q, yes, no)
                } else {
                    (q, no, yes)
                }
            }
            FeverKind::B | FeverKind::B2 => {
                let q = to_question.question(&c.claim);
                let affirm = format!("{claim}.");
                let negated = format!("It is not true that {claim}.");
                if supported {
                    (q, affirm, negated)
                } else {
                    (q, negated, affirm)
                }
            }
        };
        let good = Side {
            resp: InlineEvidenceResponse::new(good_claim.as_str(), ev.title.as_str(), ev.sentence.as_str())?,
            supported: true,
            plausible: true,
        };
        let bad = match kind {
            FeverKind::A | FeverKind::B => Side {
                resp: InlineEvidenceResponse::new(bad_claim, ev.title.as_str(), ev.sentence.as_str())?,
                supported: false,
                plausible: false,
            },
            FeverKind::A2 | FeverKind::B2 => {
                let fake = fake_quote(claims, i, rng)?;
                Side {
                    resp: InlineEvidenceResponse::new(good_claim, ev.title.as_str(), fake)?,
                    supported: false,
                    plausible: true,
                }
            }
        };
        let good_first = rng.gen_bool(0.5);
        let (a, b) = if good_first { (good, bad) } else { (bad, good) };
        let question_id = format!("fever-{i}");
        out.push(ComparisonRecord {
            ratings: vec![Rating {
                question_id: question_id.clone(),
                rater_id: FEVER_RATER_ID.to_owned(),
                plausible_a: a.plausible,
                plausible_b: b.plausible,
                supported_a: a.supported,
                supported_b: b.supported,
                preference: if good_first { Preference::PreferA } else { Preference::PreferB },
            }],
            question_id,
            question,
            response_a: a.resp,
            response_b: b.resp,
        });
    }
    Ok(out)
}

/// One or two evidence sentences drawn from pages other than claim `skip`'s.
fn fake_quote<R: Rng + ?Sized>(claims: &[FeverClaim], skip: usize, rng: &mut R) -> Result<String, PreferenceError> {
    let own: HashSet<&str> = claims[skip].evidence.iter().map(|e| e.title.as_str()).collect();
    let pool: Vec<&str> = claims
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .flat_map(|(_, c)| c.evidence.iter())
        .filter(|e| !own.contains(e.title.as_str()))
        .map(|e| e.sentence.as_str())
        .collect();
    if pool.is_empty() {
        return Err(PreferenceError::NoFakeQuoteSource);
    }
    let n = rng.gen_range(1..=2.min(pool.len()));
    Ok(pool
        .choose_multiple(rng, n)
        .copied()
        .collect::<Vec<_>>()
        .join(" "))
}

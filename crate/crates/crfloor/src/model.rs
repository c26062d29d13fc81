//! Degrees, conditions, dimension bookkeeping and stretched positions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Label = u32;
/// Direction vector; the third entry is zero when `m == 2`.
pub type Dir = [i64; 3];
pub type Rat = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("balance violated: d - sum(i*alpha_i) + sum(i*beta_i) = {0}")]
    Balance(i64),
    #[error("direction vectors sum to {0:?}, not zero")]
    NonZeroSum(Vec<i64>),
    #[error("directions do not span R^{0}")]
    NoSpan(usize),
    #[error("ambient dimension {0} unsupported")]
    Dimension(usize),
    #[error("duplicate end label {0}")]
    DuplicateLabel(Label),
    #[error("labels are not the contiguous range 1..={0}")]
    NonContiguous(usize),
    #[error("contracted ends must be labeled 1..={n}, found {label}")]
    ContractedLabel { n: usize, label: Label },
    #[error("unknown end label {0}")]
    UnknownLabel(Label),
    #[error("label {0} is not a vertical end")]
    NotVertical(Label),
    #[error("label {label} is on the wrong side: expected {expected}")]
    WrongSide { label: Label, expected: &'static str },
    #[error("label {0} carries more than one tangency condition")]
    DoubleTangency(Label),
    #[error("codimension-two tangency needs m = 3")]
    KappaInPlane,
    #[error("cross-ratio {index}: {reason}")]
    CrossRatio { index: usize, reason: String },
    #[error("line end weight for {0} must be positive")]
    LineWeight(Label),
    #[error("dimension check failed: left {left} != right {right}")]
    DimensionMismatch { left: i64, right: i64 },
}

/// One end: a label and its (weighted) direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct End {
    pub label: Label,
    pub dir: Dir,
}

impl End {
    pub fn weight(&self) -> i64 {
        self.dir.iter().fold(0i64, |g, v| g.gcd(v))
    }
    pub fn is_contracted(&self) -> bool {
        self.dir == [0, 0, 0]
    }
}

/// True if `dir` is a nonzero multiple of `e_m` in `R^m`.
pub fn is_vertical(dir: &Dir, m: usize) -> bool {
    dir[..m - 1].iter().all(|&v| v == 0) && dir[m - 1] != 0
}

/// Labeled multiset of end directions summing to zero (contracted ends included).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDegree {
    pub m: usize,
    pub ends: Vec<End>,
}

impl LabeledDegree {
    /// Checks zero sum and distinct labels. Span and contiguity are checked
    /// separately since local problems legitimately violate both.
    pub fn new(m: usize, mut ends: Vec<End>) -> Result<Self, ModelError> {
        if !(2..=3).contains(&m) {
            return Err(ModelError::Dimension(m));
        }
        ends.sort();
        for w in ends.windows(2) {
            if w[0].label == w[1].label {
                return Err(ModelError::DuplicateLabel(w[0].label));
            }
        }
        let mut sum = [0i64; 3];
        for e in &ends {
            for c in 0..3 {
                sum[c] += e.dir[c];
            }
        }
        if sum != [0, 0, 0] || (m == 2 && ends.iter().any(|e| e.dir[2] != 0)) {
            return Err(ModelError::NonZeroSum(sum[..m].to_vec()));
        }
        Ok(LabeledDegree { m, ends })
    }

    pub fn end(&self, label: Label) -> Option<&End> {
        self.ends.iter().find(|e| e.label == label)
    }

    pub fn non_contracted(&self) -> impl Iterator<Item = &End> {
        self.ends.iter().filter(|e| !e.is_contracted())
    }

    pub fn contracted(&self) -> impl Iterator<Item = &End> {
        self.ends.iter().filter(|e| e.is_contracted())
    }

    pub fn spans(&self) -> bool {
        let rows: Vec<Vec<i64>> = self.ends.iter().map(|e| e.dir[..self.m].to_vec()).collect();
        crate::linalg::rank(&rows) == self.m
    }

    /// Contracted ends 1..n and non-contracted n+1..n+#Delta.
    pub fn check_contiguous(&self) -> Result<(), ModelError> {
        let n = self.contracted().count();
        for e in self.contracted() {
            if e.label == 0 || e.label as usize > n {
                return Err(ModelError::ContractedLabel { n, label: e.label });
            }
        }
        let total = self.ends.len();
        let labels: BTreeSet<Label> = self.ends.iter().map(|e| e.label).collect();
        if labels != (1..=total as Label).collect() {
            return Err(ModelError::NonContiguous(total));
        }
        Ok(())
    }

    /// Shift every label by `n` and prepend contracted ends 1..=n.
    pub fn with_contracted(&self, n: usize) -> LabeledDegree {
        let mut ends: Vec<End> = (1..=n as Label).map(|label| End { label, dir: [0; 3] }).collect();
        ends.extend(self.ends.iter().map(|e| End { label: e.label + n as Label, dir: e.dir }));
        LabeledDegree { m: self.m, ends }
    }

    pub fn is_vertical(&self, label: Label) -> bool {
        self.end(label).is_some_and(|e| is_vertical(&e.dir, self.m))
    }
}

/// `Delta^m_d(alpha, beta)` labeled 1.. in the order e_0, -e_1, ..., -e_{m-1},
/// alpha ends by increasing weight, beta ends by increasing weight.
pub fn make_degree(m: usize, d: u32, alpha: &[u32], beta: &[u32]) -> Result<LabeledDegree, ModelError> {
    if !(2..=3).contains(&m) {
        return Err(ModelError::Dimension(m));
    }
    let wsum = |s: &[u32]| s.iter().enumerate().map(|(i, &a)| (i as i64 + 1) * a as i64).sum::<i64>();
    let bal = d as i64 - wsum(alpha) + wsum(beta);
    if bal != 0 {
        return Err(ModelError::Balance(bal));
    }
    let mut dirs: Vec<Dir> = Vec::new();
    let mut e0 = [0i64; 3];
    e0[..m].iter_mut().for_each(|v| *v = 1);
    dirs.extend(std::iter::repeat(e0).take(d as usize));
    for i in 0..m - 1 {
        let mut v = [0i64; 3];
        v[i] = -1;
        dirs.extend(std::iter::repeat(v).take(d as usize));
    }
    for (sign, seq) in [(-1i64, alpha), (1, beta)] {
        for (i, &count) in seq.iter().enumerate() {
            let mut v = [0i64; 3];
            v[m - 1] = sign * (i as i64 + 1);
            dirs.extend(std::iter::repeat(v).take(count as usize));
        }
    }
    let ends = dirs.into_iter().enumerate().map(|(i, dir)| End { label: i as Label + 1, dir }).collect();
    let deg = LabeledDegree::new(m, ends)?;
    if !deg.spans() {
        return Err(ModelError::NoSpan(m));
    }
    Ok(deg)
}

/// Tropical cross-ratio; degenerated iff `length` is absent.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CrossRatio {
    pub entries: [Label; 4],
    pub pairing: Option<[[Label; 2]; 2]>,
    pub length: Option<Rat>,
}

impl CrossRatio {
    pub fn new(entries: [Label; 4], pairing: Option<[[Label; 2]; 2]>, length: Option<Rat>) -> Result<Self, String> {
        let mut e = entries;
        e.sort_unstable();
        if e.windows(2).any(|w| w[0] == w[1]) {
            return Err(format!("entries {entries:?} are not distinct"));
        }
        let pairing = match pairing {
            None => None,
            Some(p) => {
                let mut flat = [p[0][0], p[0][1], p[1][0], p[1][1]];
                flat.sort_unstable();
                if flat != e {
                    return Err(format!("pairing {p:?} does not partition {e:?}"));
                }
                Some(normalize_pairing(p))
            }
        };
        if let Some(l) = length {
            if l <= Rat::from_integer(0) {
                return Err(format!("length {l} is not positive"));
            }
            if pairing.is_none() {
                return Err("a length needs a pairing".into());
            }
        }
        Ok(CrossRatio { entries: e, pairing, length })
    }

    pub fn degenerate(entries: [Label; 4]) -> Self {
        Self::new(entries, None, None).expect("distinct entries")
    }

    pub fn is_degenerate(&self) -> bool {
        self.length.is_none()
    }

    /// The given pairing, or `(ab|cd)` for sorted entries.
    pub fn pairing_or_canonical(&self) -> [[Label; 2]; 2] {
        self.pairing.unwrap_or_else(|| {
            let e = self.entries;
            [[e[0], e[1]], [e[2], e[3]]]
        })
    }

    pub fn contains(&self, l: Label) -> bool {
        self.entries.contains(&l)
    }
}

pub fn normalize_pairing(p: [[Label; 2]; 2]) -> [[Label; 2]; 2] {
    let mut a = p[0];
    let mut b = p[1];
    a.sort_unstable();
    b.sort_unstable();
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    [a, b]
}

impl fmt::Display for CrossRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.pairing, self.length) {
            (Some(p), Some(l)) => write!(f, "({},{}|{},{})@{}", p[0][0], p[0][1], p[1][0], p[1][1], l),
            (Some(p), None) => write!(f, "({},{}|{},{})", p[0][0], p[0][1], p[1][0], p[1][1]),
            _ => write!(f, "{{{},{},{},{}}}", self.entries[0], self.entries[1], self.entries[2], self.entries[3]),
        }
    }
}

/// Multi line in the plane: vertex, end weight, rays (1,1), (-1,0), (0,-1).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiLine {
    pub vertex: [Rat; 2],
    pub end_weight: u64,
}

/// Ray directions of a multi line, in ray-choice order.
pub const RAYS: [[i64; 2]; 3] = [[1, 1], [-1, 0], [0, -1]];
/// Primitive functional vanishing on each ray (same order).
pub const RAY_FUNCTIONALS: [[i64; 2]; 3] = [[1, -1], [0, 1], [1, 0]];

/// Combinatorial condition data, independent of positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondSpec {
    pub m: usize,
    pub ends: Vec<End>,
    /// Contracted labels with point conditions, in z-order.
    pub points: Vec<Label>,
    pub tangency_p: BTreeSet<Label>,
    pub tangency_l: BTreeMap<Label, u64>,
    pub crossratios: Vec<CrossRatio>,
}

impl CondSpec {
    pub fn end(&self, l: Label) -> Option<&End> {
        self.ends.iter().find(|e| e.label == l)
    }

    /// `dim M - #conditions` for the moduli space with these ends.
    pub fn excess(&self) -> i64 {
        let m = self.m as i64;
        let dim = self.ends.len() as i64 - 3 + m;
        let cond = m * self.points.len() as i64
            + (m - 1) * self.tangency_p.len() as i64
            + (m - 2) * self.tangency_l.len() as i64
            + self.crossratios.len() as i64;
        dim - cond
    }
}

/// A validated counting problem.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub degree: LabeledDegree,
    pub n_points: usize,
    pub eta_alpha: BTreeSet<Label>,
    pub eta_beta: BTreeSet<Label>,
    pub kappa_alpha: BTreeSet<Label>,
    pub kappa_beta: BTreeSet<Label>,
    pub line_end_weights: BTreeMap<Label, u64>,
    pub crossratios: Vec<CrossRatio>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DimensionReport {
    pub left: i64,
    pub right: i64,
    pub pass: bool,
    /// Labels carrying both a tangency condition and a cross-ratio entry.
    pub flagged: Vec<Label>,
}

impl Problem {
    pub fn m(&self) -> usize {
        self.degree.m
    }

    pub fn eta(&self) -> BTreeSet<Label> {
        self.eta_alpha.union(&self.eta_beta).copied().collect()
    }

    pub fn kappa(&self) -> BTreeSet<Label> {
        self.kappa_alpha.union(&self.kappa_beta).copied().collect()
    }

    pub fn line_weight(&self, l: Label) -> u64 {
        self.line_end_weights.get(&l).copied().unwrap_or(1)
    }

    /// Number of non-contracted ends.
    pub fn delta_size(&self) -> usize {
        self.degree.non_contracted().count()
    }

    /// Structural validation (everything except the dimension equation).
    pub fn validate_structure(&self) -> Result<(), ModelError> {
        let m = self.m();
        self.degree.check_contiguous()?;
        let n = self.degree.contracted().count();
        if n != self.n_points {
            return Err(ModelError::ContractedLabel { n: self.n_points, label: n as Label });
        }
        let plain = LabeledDegree { m, ends: self.degree.non_contracted().copied().collect() };
        if !plain.spans() {
            return Err(ModelError::NoSpan(m));
        }
        let side = |set: &BTreeSet<Label>, up: bool| -> Result<(), ModelError> {
            for &l in set {
                let e = self.degree.end(l).ok_or(ModelError::UnknownLabel(l))?;
                if !is_vertical(&e.dir, m) {
                    return Err(ModelError::NotVertical(l));
                }
                if (e.dir[m - 1] > 0) != up {
                    return Err(ModelError::WrongSide { label: l, expected: if up { "beta" } else { "alpha" } });
                }
            }
            Ok(())
        };
        side(&self.eta_alpha, false)?;
        side(&self.eta_beta, true)?;
        side(&self.kappa_alpha, false)?;
        side(&self.kappa_beta, true)?;
        if m == 2 && !(self.kappa_alpha.is_empty() && self.kappa_beta.is_empty()) {
            return Err(ModelError::KappaInPlane);
        }
        if let Some(&l) = self.eta().intersection(&self.kappa()).next() {
            return Err(ModelError::DoubleTangency(l));
        }
        for (&l, &w) in &self.line_end_weights {
            if w == 0 {
                return Err(ModelError::LineWeight(l));
            }
        }
        for (index, cr) in self.crossratios.iter().enumerate() {
            for &l in &cr.entries {
                let e = self.degree.end(l).ok_or(ModelError::UnknownLabel(l))?;
                if !(e.is_contracted() || is_vertical(&e.dir, m)) {
                    return Err(ModelError::CrossRatio {
                        index,
                        reason: format!("entry {l} is neither contracted nor vertical"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn check_dimension(&self) -> DimensionReport {
        let m = self.m() as i64;
        let left = self.delta_size() as i64 - 3 + m;
        let right = (m - 1) * self.n_points as i64
            + self.crossratios.len() as i64
            + (m - 1) * self.eta().len() as i64
            + (m - 2) * self.kappa().len() as i64;
        let tangent: BTreeSet<Label> = self.eta().union(&self.kappa()).copied().collect();
        let flagged = self
            .crossratios
            .iter()
            .flat_map(|c| c.entries)
            .filter(|l| tangent.contains(l))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        DimensionReport { left, right, pass: left == right, flagged }
    }

    /// Structure plus dimension equation.
    pub fn validate(&self) -> Result<DimensionReport, ModelError> {
        self.validate_structure()?;
        let r = self.check_dimension();
        if !r.pass {
            return Err(ModelError::DimensionMismatch { left: r.left, right: r.right });
        }
        Ok(r)
    }

    pub fn cond_spec(&self) -> CondSpec {
        CondSpec {
            m: self.m(),
            ends: self.degree.ends.clone(),
            points: (1..=self.n_points as Label).collect(),
            tangency_p: self.eta(),
            tangency_l: self.kappa().into_iter().map(|l| (l, self.line_weight(l))).collect(),
            crossratios: self.crossratios.clone(),
        }
    }
}

/// End of an explicit degree in a problem file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndDoc {
    pub label: Label,
    pub direction: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DegreeDoc {
    Standard {
        d: u32,
        #[serde(default)]
        alpha: Vec<u32>,
        #[serde(default)]
        beta: Vec<u32>,
    },
    /// Non-contracted ends; contracted ends `1..=n_points` are implied.
    Explicit { ends: Vec<EndDoc> },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidesDoc {
    #[serde(default)]
    pub alpha: BTreeSet<Label>,
    #[serde(default)]
    pub beta: BTreeSet<Label>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossRatioDoc {
    pub entries: [Label; 4],
    #[serde(default)]
    pub pairing: Option<[[Label; 2]; 2]>,
    /// Decimal or `p/q`.
    #[serde(default)]
    pub length: Option<String>,
}

/// Problem file layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub dimension: usize,
    pub degree: DegreeDoc,
    pub n_points: usize,
    #[serde(default)]
    pub eta: SidesDoc,
    #[serde(default)]
    pub kappa: SidesDoc,
    #[serde(default)]
    pub line_end_weights: BTreeMap<Label, u64>,
    #[serde(default)]
    pub crossratios: Vec<CrossRatioDoc>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed problem file: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("degree: {0}")]
    Degree(ModelError),
    #[error("degree.ends[{index}]: direction must have {m} entries")]
    Direction { index: usize, m: usize },
    #[error("crossratios[{index}]: {reason}")]
    CrossRatio { index: usize, reason: String },
    #[error(transparent)]
    Invalid(ModelError),
}

impl ParseError {
    /// Exit-status class: dimension failures are validation errors too.
    pub fn is_dimension(&self) -> bool {
        matches!(self, ParseError::Invalid(ModelError::DimensionMismatch { .. }))
    }
}

fn parse_length(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let (a, b) = (a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?);
        return (b != 0).then(|| Rat::new(a, b));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let den = 10i64.checked_pow(frac.len() as u32)?;
        let sign = if int.starts_with('-') { -1 } else { 1 };
        let whole = if int.is_empty() || int == "-" { 0 } else { int.parse::<i64>().ok()? };
        let f = if frac.is_empty() { 0 } else { frac.parse::<i64>().ok()? };
        return Some(Rat::new(whole * den + sign * f, den));
    }
    s.parse::<i64>().ok().map(Rat::from_integer)
}

impl ProblemDoc {
    pub fn into_problem(self) -> Result<Problem, ParseError> {
        let m = self.dimension;
        let n = self.n_points;
        let degree = match self.degree {
            DegreeDoc::Standard { d, alpha, beta } => make_degree(m, d, &alpha, &beta).map_err(ParseError::Degree)?.with_contracted(n),
            DegreeDoc::Explicit { ends } => {
                let mut all: Vec<End> = (1..=n as Label).map(|label| End { label, dir: [0; 3] }).collect();
                for (index, e) in ends.iter().enumerate() {
                    if e.direction.len() != m {
                        return Err(ParseError::Direction { index, m });
                    }
                    let mut dir = [0i64; 3];
                    dir[..m].copy_from_slice(&e.direction);
                    all.push(End { label: e.label, dir });
                }
                LabeledDegree::new(m, all).map_err(ParseError::Degree)?
            }
        };
        let mut crossratios = Vec::with_capacity(self.crossratios.len());
        for (index, c) in self.crossratios.into_iter().enumerate() {
            let length = match &c.length {
                None => None,
                Some(s) => Some(parse_length(s).ok_or_else(|| ParseError::CrossRatio { index, reason: format!("bad length {s:?}") })?),
            };
            crossratios.push(CrossRatio::new(c.entries, c.pairing, length).map_err(|reason| ParseError::CrossRatio { index, reason })?);
        }
        let problem = Problem {
            degree,
            n_points: n,
            eta_alpha: self.eta.alpha,
            eta_beta: self.eta.beta,
            kappa_alpha: self.kappa.alpha,
            kappa_beta: self.kappa.beta,
            line_end_weights: self.line_end_weights,
            crossratios,
            seed: self.seed,
        };
        problem.validate().map_err(ParseError::Invalid)?;
        Ok(problem)
    }
}

/// Parse and validate a problem file.
pub fn parse_problem(text: &str) -> Result<Problem, ParseError> {
    serde_json::from_str::<ProblemDoc>(text)?.into_problem()
}

/// Exact positions for all conditions of a `CondSpec`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PositionedConditions {
    pub m: usize,
    /// Point positions keyed by contracted label.
    pub points: BTreeMap<Label, Vec<Rat>>,
    /// Codimension-(m-1) tangency positions (first m-1 coordinates).
    pub p_positions: BTreeMap<Label, Vec<Rat>>,
    pub lines: BTreeMap<Label, MultiLine>,
    pub eps: Rat,
    pub z_gap: Rat,
    pub attempt: u32,
}

/// Box size.
pub const EPS: i64 = 1;
/// Gap between consecutive point heights.
pub const Z_GAP: i64 = 1 << 20;
/// Denominator of sampled coordinates.
pub const DENOM: i64 = 1 << 16;

fn sub_seed(seed: u64, attempt: u32) -> u64 {
    seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn in_box(rng: &mut ChaCha8Rng) -> Rat {
    Rat::new(rng.gen_range(1..EPS * DENOM), DENOM)
}

/// Stretched configuration: projections in the open `EPS` box, point heights
/// `Z_GAP` apart in label order. Pure in `(spec, seed, attempt)`.
pub fn sample_positions(spec: &CondSpec, seed: u64, attempt: u32) -> PositionedConditions {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, attempt));
    let m = spec.m;
    let mut points = BTreeMap::new();
    for (i, &l) in spec.points.iter().enumerate() {
        let mut p: Vec<Rat> = (0..m - 1).map(|_| in_box(&mut rng)).collect();
        p.push(Rat::from_integer(Z_GAP * i as i64) + in_box(&mut rng));
        points.insert(l, p);
    }
    let mut p_positions = BTreeMap::new();
    for &l in &spec.tangency_p {
        p_positions.insert(l, (0..m - 1).map(|_| in_box(&mut rng)).collect());
    }
    let mut lines = BTreeMap::new();
    for (&l, &w) in &spec.tangency_l {
        let vertex = [in_box(&mut rng), in_box(&mut rng)];
        lines.insert(l, MultiLine { vertex, end_weight: w });
    }
    PositionedConditions {
        m,
        points,
        p_positions,
        lines,
        eps: Rat::from_integer(EPS),
        z_gap: Rat::from_integer(Z_GAP),
        attempt,
    }
}

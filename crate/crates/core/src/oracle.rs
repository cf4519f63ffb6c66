//! Exact re-derivation of every bound by optimizing over the latent
//! response-type x choice distribution.
//!
//! A population is described by eight masses `q[r][x]`: response type `r`
//! (benefit, harm, always-survivor, doomed) crossed with the treatment `x` the
//! unit chooses when free to. Observed study quantities are linear in these
//! masses, so the set of populations consistent with the data is a polytope
//! inside the 7-simplex. Its vertices are the basic feasible solutions of the
//! equality system, which we enumerate exhaustively in rational arithmetic.
//! The min/max of the benefit (or harm) mass over those vertices is the tight
//! bound, and the attaining vertex is a witness population.
//!
//! Nothing here shares code with [`crate::bounds`]; the two must agree.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Signed, Zero};

use crate::bounds::{EvidenceScope, Interval, Target};
use crate::error::{Error, Result};
use crate::num::{in_unit_interval, int, one, to_exact_string, zero, Rational};
use crate::study::{ExperimentalRates, ObservationalRates, StudyProbabilities};

pub const CELLS: usize = 8;

/// The four deterministic ways a unit can respond to a binary treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResponseType {
    /// Survives if treated, dies if not.
    Benefit,
    /// Dies if treated, survives if not.
    Harm,
    /// Survives either way.
    Always,
    /// Dies either way.
    Doomed,
}

impl ResponseType {
    pub const ALL: [ResponseType; 4] = [
        ResponseType::Benefit,
        ResponseType::Harm,
        ResponseType::Always,
        ResponseType::Doomed,
    ];

    /// Outcome under the given treatment.
    pub fn survives(self, treated: bool) -> bool {
        match self {
            ResponseType::Benefit => treated,
            ResponseType::Harm => !treated,
            ResponseType::Always => true,
            ResponseType::Doomed => false,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ResponseType::Benefit => "benefit",
            ResponseType::Harm => "harm",
            ResponseType::Always => "always",
            ResponseType::Doomed => "doomed",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ResponseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a unit does when it may choose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Choice {
    Treatment,
    Control,
}

impl Choice {
    pub const ALL: [Choice; 2] = [Choice::Treatment, Choice::Control];

    fn index(self) -> usize {
        self as usize
    }
}

/// Flat cell index for `(r, x)`.
pub fn cell(r: ResponseType, x: Choice) -> usize {
    r.index() * 2 + x.index()
}

/// Joint distribution over response type and free choice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResponseTypeDistribution {
    cells: [Rational; CELLS],
}

impl ResponseTypeDistribution {
    pub fn new(cells: [Rational; CELLS]) -> Result<Self> {
        if cells.iter().any(|c| c.is_negative()) {
            return Err(Error::Value {
                field: "response type distribution".into(),
                message: "negative cell mass".into(),
            });
        }
        let total: Rational = cells.iter().sum();
        if !total.is_one() {
            return Err(Error::Value {
                field: "response type distribution".into(),
                message: format!("cells sum to {}", to_exact_string(&total)),
            });
        }
        Ok(Self { cells })
    }

    /// Normalizes nonnegative integer weights.
    pub fn from_weights(weights: [u64; CELLS]) -> Result<Self> {
        let total: u64 = weights.iter().sum();
        if total == 0 {
            return Err(Error::Value {
                field: "response type distribution".into(),
                message: "all weights are zero".into(),
            });
        }
        let cells = weights.map(|w| crate::num::ratio(w, total));
        Self::new(cells)
    }

    pub fn get(&self, r: ResponseType, x: Choice) -> &Rational {
        &self.cells[cell(r, x)]
    }

    pub fn cells(&self) -> &[Rational; CELLS] {
        &self.cells
    }

    pub fn type_mass(&self, r: ResponseType) -> Rational {
        self.get(r, Choice::Treatment) + self.get(r, Choice::Control)
    }

    pub fn choice_mass(&self, x: Choice) -> Rational {
        ResponseType::ALL.iter().map(|&r| self.get(r, x)).sum()
    }
}

/// Latent masses and induced observables of a [`ResponseTypeDistribution`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnsRecord {
    pub benefit: Rational,
    pub harm: Rational,
    pub always: Rational,
    pub doomed: Rational,
    pub p_yt: Rational,
    pub p_yc: Rational,
    pub p_t: Rational,
    /// Undefined when nobody chooses treatment.
    pub p_y_given_t: Option<Rational>,
    /// Undefined when nobody chooses control.
    pub p_y_given_c: Option<Rational>,
}

impl PnsRecord {
    /// The combined-study probabilities this population would produce.
    pub fn study_probabilities(&self) -> StudyProbabilities {
        StudyProbabilities::from_parts(
            Some(ExperimentalRates::new(self.p_yt.clone(), self.p_yc.clone()).expect("valid")),
            Some(
                ObservationalRates::new(
                    self.p_t.clone(),
                    self.p_y_given_t.clone(),
                    self.p_y_given_c.clone(),
                )
                .expect("valid"),
            ),
        )
        .expect("both studies present")
    }
}

/// Ground-truth benefit/harm masses and the observables a population induces.
pub fn pns_of(d: &ResponseTypeDistribution) -> PnsRecord {
    use Choice::*;
    use ResponseType::*;
    let benefit = d.type_mass(Benefit);
    let harm = d.type_mass(Harm);
    let always = d.type_mass(Always);
    let doomed = d.type_mass(Doomed);
    let p_t = d.choice_mass(Treatment);
    let p_c = d.choice_mass(Control);
    let t_y = d.get(Benefit, Treatment) + d.get(Always, Treatment);
    let c_y = d.get(Harm, Control) + d.get(Always, Control);
    PnsRecord {
        p_yt: &benefit + &always,
        p_yc: &harm + &always,
        p_y_given_t: (!p_t.is_zero()).then(|| &t_y / &p_t),
        p_y_given_c: (!p_c.is_zero()).then(|| &c_y / &p_c),
        p_t,
        benefit,
        harm,
        always,
        doomed,
    }
}

/// `coeffs . q = rhs` over the eight cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearEquality {
    pub label: &'static str,
    pub coeffs: [i64; CELLS],
    pub rhs: Rational,
}

/// Equalities over the cells; nonnegativity of all eight cells is implicit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSystem {
    pub scope: EvidenceScope,
    pub equalities: Vec<LinearEquality>,
}

impl ConstraintSystem {
    pub fn nonnegativity_count(&self) -> usize {
        CELLS
    }

    /// Sorted, deduplicated vertices of the polytope. Empty iff infeasible.
    pub fn vertices(&self) -> Vec<ResponseTypeDistribution> {
        let coeffs: Vec<[i64; CELLS]> = self.equalities.iter().map(|e| e.coeffs).collect();
        let rhs: Vec<Rational> = self.equalities.iter().map(|e| e.rhs.clone()).collect();
        let table = BasisTable::cached(&coeffs);
        let mut out: Vec<ResponseTypeDistribution> = table
            .basic_feasible_solutions(&rhs)
            .into_iter()
            .map(|cells| ResponseTypeDistribution { cells })
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

fn indicator(pairs: &[(ResponseType, Choice)]) -> [i64; CELLS] {
    let mut coeffs = [0; CELLS];
    for &(r, x) in pairs {
        coeffs[cell(r, x)] = 1;
    }
    coeffs
}

fn both_choices(types: &[ResponseType]) -> [i64; CELLS] {
    let pairs: Vec<_> = types
        .iter()
        .flat_map(|&r| Choice::ALL.map(|x| (r, x)))
        .collect();
    indicator(&pairs)
}

/// The equality system whose solutions are exactly the populations consistent
/// with the data visible under `scope`.
pub fn build_polytope(p: &StudyProbabilities, scope: EvidenceScope) -> Result<ConstraintSystem> {
    use Choice::*;
    use ResponseType::*;
    let mut equalities = vec![LinearEquality {
        label: "sum = 1",
        coeffs: [1; CELLS],
        rhs: one(),
    }];
    if scope.uses_experimental() {
        let exp = p.require_experimental()?;
        equalities.push(LinearEquality {
            label: "P(y_t)",
            coeffs: both_choices(&[Benefit, Always]),
            rhs: exp.p_yt.clone(),
        });
        equalities.push(LinearEquality {
            label: "P(y_c)",
            coeffs: both_choices(&[Harm, Always]),
            rhs: exp.p_yc.clone(),
        });
    }
    if scope.uses_observational() {
        let obs = p.require_observational()?;
        let p_c = one() - &obs.p_t;
        equalities.push(LinearEquality {
            label: "P(t)",
            coeffs: indicator(&ResponseType::ALL.map(|r| (r, Treatment))),
            rhs: obs.p_t.clone(),
        });
        // conditionals enter through their joints so that an empty arm is just a zero
        equalities.push(LinearEquality {
            label: "P(y|t)",
            coeffs: indicator(&[(Benefit, Treatment), (Always, Treatment)]),
            rhs: obs
                .p_y_given_t
                .as_ref()
                .map_or_else(zero, |q| &obs.p_t * q),
        });
        equalities.push(LinearEquality {
            label: "P(y|c)",
            coeffs: indicator(&[(Harm, Control), (Always, Control)]),
            rhs: obs.p_y_given_c.as_ref().map_or_else(zero, |q| &p_c * q),
        });
    }
    Ok(ConstraintSystem { scope, equalities })
}

fn objective(target: Target) -> [i64; CELLS] {
    match target {
        Target::Benefit => both_choices(&[ResponseType::Benefit]),
        Target::Harm => both_choices(&[ResponseType::Harm]),
    }
}

fn evaluate(coeffs: &[i64; CELLS], d: &ResponseTypeDistribution) -> Rational {
    coeffs
        .iter()
        .zip(d.cells.iter())
        .filter(|(c, _)| **c != 0)
        .map(|(c, q)| q * int(*c))
        .sum()
}

/// Bounds with the vertices that attain them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSolution {
    pub interval: Interval,
    pub min_witness: ResponseTypeDistribution,
    pub max_witness: ResponseTypeDistribution,
    pub vertex_count: usize,
}

pub fn oracle_solve(
    p: &StudyProbabilities,
    scope: EvidenceScope,
    target: Target,
) -> Result<OracleSolution> {
    let vertices = build_polytope(p, scope)?.vertices();
    let coeffs = objective(target);
    let scored: Vec<(Rational, &ResponseTypeDistribution)> =
        vertices.iter().map(|v| (evaluate(&coeffs, v), v)).collect();
    let (min, min_witness) = scored
        .iter()
        .min_by(|a, b| a.0.cmp(&b.0))
        .ok_or(Error::EmptyPolytope)?;
    let (max, max_witness) = scored
        .iter()
        .max_by(|a, b| a.0.cmp(&b.0))
        .ok_or(Error::EmptyPolytope)?;
    Ok(OracleSolution {
        interval: Interval::new(min.clone(), max.clone())?,
        min_witness: (*min_witness).clone(),
        max_witness: (*max_witness).clone(),
        vertex_count: vertices.len(),
    })
}

/// Exact `[min, max]` of the benefit or harm mass over the polytope.
pub fn oracle_bounds(p: &StudyProbabilities, scope: EvidenceScope, target: Target) -> Result<Interval> {
    oracle_solve(p, scope, target).map(|s| s.interval)
}

/// Whether some population reproduces every observed quantity.
pub fn feasible(p: &StudyProbabilities) -> bool {
    build_polytope(p, EvidenceScope::best_available(p))
        .map(|system| !system.vertices().is_empty())
        .unwrap_or(false)
}

/// Row-reduced form of a fixed coefficient matrix plus the inverse of every
/// nonsingular basis. Only the right-hand side varies between calls, so one
/// table serves every input with the same scope.
struct BasisTable {
    /// `transform * A` has full row rank.
    transform: Vec<Vec<Rational>>,
    /// `consistency . b = 0` for every row is required for feasibility.
    consistency: Vec<Vec<Rational>>,
    /// (basis columns, inverse of the reduced basis matrix)
    bases: Vec<(Vec<usize>, Vec<Vec<Rational>>)>,
}

impl BasisTable {
    fn cached(coeffs: &[[i64; CELLS]]) -> Arc<BasisTable> {
        static CACHE: OnceLock<Mutex<HashMap<Vec<[i64; CELLS]>, Arc<BasisTable>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry(coeffs.to_vec())
            .or_insert_with(|| Arc::new(BasisTable::build(coeffs)))
            .clone()
    }

    fn build(coeffs: &[[i64; CELLS]]) -> BasisTable {
        let m = coeffs.len();
        // [A | I], reduced on the A block only
        let mut rows: Vec<Vec<Rational>> = coeffs
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r: Vec<Rational> = row.iter().map(|&c| int(c)).collect();
                r.extend((0..m).map(|j| if i == j { one() } else { zero() }));
                r
            })
            .collect();
        let mut rank = 0;
        for col in 0..CELLS {
            let Some(pivot) = (rank..m).find(|&r| !rows[r][col].is_zero()) else {
                continue;
            };
            rows.swap(rank, pivot);
            let inv = rows[rank][col].recip();
            for v in rows[rank].iter_mut() {
                *v = &*v * &inv;
            }
            for r in 0..m {
                if r != rank && !rows[r][col].is_zero() {
                    let factor = rows[r][col].clone();
                    for c in 0..CELLS + m {
                        let delta = &factor * &rows[rank][c];
                        rows[r][c] = &rows[r][c] - delta;
                    }
                }
            }
            rank += 1;
        }
        let reduced: Vec<Vec<Rational>> = rows[..rank].iter().map(|r| r[..CELLS].to_vec()).collect();
        let transform = rows[..rank].iter().map(|r| r[CELLS..].to_vec()).collect();
        let consistency = rows[rank..].iter().map(|r| r[CELLS..].to_vec()).collect();

        let mut bases = Vec::new();
        for columns in combinations(CELLS, rank) {
            let square: Vec<Vec<Rational>> = reduced
                .iter()
                .map(|row| columns.iter().map(|&c| row[c].clone()).collect())
                .collect();
            if let Some(inverse) = invert(square) {
                bases.push((columns, inverse));
            }
        }
        BasisTable {
            transform,
            consistency,
            bases,
        }
    }

    fn basic_feasible_solutions(&self, rhs: &[Rational]) -> Vec<[Rational; CELLS]> {
        let dot = |row: &[Rational]| -> Rational {
            row.iter()
                .zip(rhs)
                .filter(|(a, _)| !a.is_zero())
                .map(|(a, b)| a * b)
                .sum()
        };
        if self.consistency.iter().any(|row| !dot(row).is_zero()) {
            return Vec::new();
        }
        let reduced_rhs: Vec<Rational> = self.transform.iter().map(|row| dot(row)).collect();
        let mut out = Vec::new();
        'bases: for (columns, inverse) in &self.bases {
            let mut point: [Rational; CELLS] = std::array::from_fn(|_| zero());
            for (slot, row) in columns.iter().zip(inverse) {
                let value: Rational = row
                    .iter()
                    .zip(&reduced_rhs)
                    .filter(|(a, _)| !a.is_zero())
                    .map(|(a, b)| a * b)
                    .sum();
                if value.is_negative() {
                    continue 'bases;
                }
                point[*slot] = value;
            }
            debug_assert!(point.iter().all(in_unit_interval));
            out.push(point);
        }
        out
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            go(i + 1, n, k, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Gauss-Jordan inverse; `None` when singular.
fn invert(mut a: Vec<Vec<Rational>>) -> Option<Vec<Vec<Rational>>> {
    let n = a.len();
    let mut inv: Vec<Vec<Rational>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { one() } else { zero() }).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let scale = a[col][col].recip();
        for j in 0..n {
            a[col][j] = &a[col][j] * &scale;
            inv[col][j] = &inv[col][j] * &scale;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for j in 0..n {
                    let da = &factor * &a[col][j];
                    a[r][j] = &a[r][j] - da;
                    let di = &factor * &inv[col][j];
                    inv[r][j] = &inv[r][j] - di;
                }
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{parse_decimal, ratio};
    use crate::tables;

    fn dec(s: &str) -> Rational {
        parse_decimal(s).unwrap()
    }

    #[test]
    fn constraint_counts_by_scope() {
        let female = tables::female_probabilities();
        let system = build_polytope(&female, EvidenceScope::Combined).unwrap();
        assert_eq!(system.equalities.len(), 6);
        assert_eq!(system.nonnegativity_count(), 8);
        let system = build_polytope(&female, EvidenceScope::ExperimentalOnly).unwrap();
        assert_eq!(system.equalities.len(), 3);
        let system = build_polytope(&female, EvidenceScope::ObservationalOnly).unwrap();
        assert_eq!(system.equalities.len(), 4);
        let exp_only = StudyProbabilities::experimental_only(dec("0.3"), dec("0.1")).unwrap();
        assert_eq!(
            build_polytope(&exp_only, EvidenceScope::Combined),
            Err(Error::MissingField("p_t"))
        );
    }

    #[test]
    fn male_combined_has_unique_benefit_mass() {
        let male = tables::male_probabilities();
        let system = build_polytope(&male, EvidenceScope::Combined).unwrap();
        let vertices = system.vertices();
        assert!(!vertices.is_empty());
        for v in &vertices {
            assert_eq!(v.type_mass(ResponseType::Benefit), dec("0.49"));
        }
    }

    #[test]
    fn worked_example_bounds() {
        let female = tables::female_probabilities();
        let male = tables::male_probabilities();
        let point = |s: &str| Interval::point(dec(s)).unwrap();
        assert_eq!(
            oracle_bounds(&female, EvidenceScope::Combined, Target::Benefit).unwrap(),
            point("0.279")
        );
        assert_eq!(
            oracle_bounds(&male, EvidenceScope::ObservationalOnly, Target::Benefit).unwrap(),
            Interval::new(zero(), dec("0.58")).unwrap()
        );
        assert_eq!(
            oracle_bounds(&male, EvidenceScope::Combined, Target::Harm).unwrap(),
            point("0.21")
        );
    }

    #[test]
    fn witnesses_reproduce_data_and_attain_bounds() {
        let male = tables::male_probabilities();
        let s = oracle_solve(&male, EvidenceScope::ExperimentalOnly, Target::Benefit).unwrap();
        assert_eq!(s.interval, Interval::new(dec("0.28"), dec("0.49")).unwrap());
        for w in [&s.min_witness, &s.max_witness] {
            let rec = pns_of(w);
            assert_eq!(rec.p_yt, dec("0.49"));
            assert_eq!(rec.p_yc, dec("0.21"));
        }
        assert_eq!(pns_of(&s.min_witness).benefit, dec("0.28"));
        assert_eq!(pns_of(&s.max_witness).benefit, dec("0.49"));
    }

    #[test]
    fn pns_examples() {
        use Choice::*;
        use ResponseType::*;
        // male-consistent population: benefit .49 all choosing t, harm .21
        // all avoiding, doomed .30 split .21/.09
        let mut cells: [Rational; CELLS] = std::array::from_fn(|_| zero());
        cells[cell(Benefit, Treatment)] = dec("0.49");
        cells[cell(Harm, Control)] = dec("0.21");
        cells[cell(Doomed, Treatment)] = dec("0.21");
        cells[cell(Doomed, Control)] = dec("0.09");
        let d = ResponseTypeDistribution::new(cells).unwrap();
        let rec = pns_of(&d);
        assert_eq!(rec.benefit, dec("0.49"));
        assert_eq!(rec.p_y_given_t, Some(dec("0.7")));
        assert_eq!(rec.p_y_given_c, Some(dec("0.7")));
        assert_eq!(rec.p_t, dec("0.7"));

        let mut cells: [Rational; CELLS] = std::array::from_fn(|_| zero());
        cells[cell(Always, Treatment)] = one();
        let rec = pns_of(&ResponseTypeDistribution::new(cells).unwrap());
        assert_eq!((rec.p_yt, rec.p_yc, rec.p_t), (one(), one(), one()));
        assert_eq!(rec.p_y_given_c, None);

        let rec = pns_of(&ResponseTypeDistribution::from_weights([1; CELLS]).unwrap());
        assert_eq!(rec.benefit, ratio(1, 4));
        assert_eq!(rec.p_t, ratio(1, 2));
        assert_eq!(rec.p_y_given_t, Some(ratio(1, 2)));
    }

    #[test]
    fn feasibility_examples() {
        assert!(feasible(&tables::female_probabilities()));
        let bad = StudyProbabilities::new(dec("0.9"), dec("0.5"), dec("0.1"), dec("0.5"), dec("0.5"))
            .unwrap();
        assert!(!feasible(&bad));
        assert_eq!(
            oracle_bounds(&bad, EvidenceScope::Combined, Target::Benefit),
            Err(Error::EmptyPolytope)
        );
        let d = ResponseTypeDistribution::from_weights([3, 0, 1, 4, 0, 2, 5, 1]).unwrap();
        assert!(feasible(&pns_of(&d).study_probabilities()));
    }

    #[test]
    fn distribution_validation() {
        assert!(ResponseTypeDistribution::from_weights([0; CELLS]).is_err());
        let mut cells: [Rational; CELLS] = std::array::from_fn(|_| zero());
        cells[0] = dec("0.5");
        assert!(ResponseTypeDistribution::new(cells.clone()).is_err());
        cells[1] = dec("0.7");
        cells[2] = dec("-0.2");
        assert!(ResponseTypeDistribution::new(cells).is_err());
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(8, 6).len(), 28);
        assert_eq!(combinations(3, 2), vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn vertex_set_is_canonical() {
        let p = tables::female_probabilities();
        let a = build_polytope(&p, EvidenceScope::ObservationalOnly).unwrap().vertices();
        let b = build_polytope(&p, EvidenceScope::ObservationalOnly).unwrap().vertices();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }
}

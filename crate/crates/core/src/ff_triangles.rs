//! Equilateral triples in `F_q^d` for odd prime `q`.
//!
//! The "distance" is the quadratic form `‖u - v‖ = Σ (u_i - v_i)^2 mod q`.
//! Triples whose common side class is `0` (isotropic triples) are counted in a
//! separate bucket and are not part of [`TriangleCensus::total`].

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};

/// Default cap on triple visits for exhaustive scans.
pub const DEFAULT_TRIPLE_BUDGET: u128 = 500_000_000;

/// The prime field `F_q`, `q` an odd prime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimeField {
    q: u64,
}

impl PrimeField {
    pub fn new(q: u64) -> Result<Self> {
        if q < 3 || q % 2 == 0 || !is_prime(q) {
            return Err(precondition(format!("{q} is not an odd prime")));
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.q as u128) as u64
    }

    fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1;
        base %= self.q;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }
}

/// Trial division.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut k = 2;
    while k * k <= n {
        if n % k == 0 {
            return false;
        }
        k += 1;
    }
    true
}

/// All primes `≤ n`, ascending.
pub fn primes_up_to(n: u64) -> Vec<u64> {
    (2..=n).filter(|&k| is_prime(k)).collect()
}

/// A square root of `a` in `F_q` (Tonelli–Shanks), or `None` for a non-residue.
pub fn legendre_sqrt(a: u64, field: PrimeField) -> Option<u64> {
    let q = field.q;
    assert!(a < q, "residue {a} not reduced mod {q}");
    if a == 0 {
        return Some(0);
    }
    if field.pow(a, (q - 1) / 2) != 1 {
        return None;
    }
    // q - 1 = s_odd * 2^e
    let mut s_odd = q - 1;
    let mut e = 0;
    while s_odd % 2 == 0 {
        s_odd /= 2;
        e += 1;
    }
    let z = (2..q)
        .find(|&z| field.pow(z, (q - 1) / 2) == q - 1)
        .expect("odd prime has a non-residue");
    let mut m = e;
    let mut c = field.pow(z, s_odd);
    let mut t = field.pow(a, s_odd);
    let mut r = field.pow(a, s_odd.div_ceil(2));
    while t != 1 {
        let mut i = 0;
        let mut tt = t;
        while tt != 1 {
            tt = field.mul(tt, tt);
            i += 1;
        }
        let b = field.pow(c, 1 << (m - i - 1));
        m = i;
        c = field.mul(b, b);
        t = field.mul(t, c);
        r = field.mul(r, b);
    }
    debug_assert_eq!(field.mul(r, r), a);
    Some(r)
}

/// A point of `F_q^d`; coordinates are kept reduced.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FFVector {
    coords: Vec<u64>,
}

impl FFVector {
    pub fn new(coords: Vec<u64>, field: PrimeField) -> Self {
        Self {
            coords: coords.into_iter().map(|c| c % field.q).collect(),
        }
    }

    pub fn coords(&self) -> &[u64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// `Σ (u_i - v_i)^2 mod q`.
pub fn ff_norm(u: &FFVector, v: &FFVector, field: PrimeField) -> u64 {
    assert_eq!(u.dim(), v.dim(), "dimension mismatch");
    let q = field.q;
    u.coords
        .iter()
        .zip(&v.coords)
        .map(|(&a, &b)| {
            let diff = (a + q - b) % q;
            field.mul(diff, diff)
        })
        .fold(0, |acc, x| (acc + x) % q)
}

/// A deduplicated point set in `F_q^d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FFSubset {
    field: PrimeField,
    d: usize,
    points: Vec<FFVector>,
}

impl FFSubset {
    /// Builds a subset, dropping duplicate points. Order of first occurrence is kept.
    pub fn new(field: PrimeField, d: usize, points: Vec<FFVector>) -> Result<Self> {
        if d == 0 {
            return Err(precondition("dimension must be positive"));
        }
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(points.len());
        for p in points {
            if p.dim() != d {
                return Err(precondition(format!("point of dimension {} in F_q^{d}", p.dim())));
            }
            let p = FFVector::new(p.coords, field);
            if seen.insert(p.clone()) {
                out.push(p);
            }
        }
        Ok(Self { field, d, points: out })
    }

    /// The whole space `F_q^d`, in lexicographic order.
    pub fn full_space(field: PrimeField, d: usize) -> Result<Self> {
        let size = space_size(field, d).ok_or_else(|| precondition("q^d overflows"))?;
        if size > 50_000_000 {
            return Err(precondition(format!("q^d = {size} too large to materialize")));
        }
        let points = (0..size).map(|i| index_to_point(i, field, d)).collect();
        Ok(Self { field, d, points })
    }

    /// `size` distinct uniform points drawn without replacement.
    pub fn random(field: PrimeField, d: usize, size: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let total = space_size(field, d).ok_or_else(|| precondition("q^d overflows"))?;
        if size as u64 > total {
            return Err(precondition(format!("size {size} exceeds q^d = {total}")));
        }
        let idx = sample(rng, total as usize, size);
        let points = idx.iter().map(|i| index_to_point(i as u64, field, d)).collect();
        Ok(Self { field, d, points })
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn points(&self) -> &[FFVector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn space_size(field: PrimeField, d: usize) -> Option<u64> {
    field.q.checked_pow(d as u32)
}

fn index_to_point(mut i: u64, field: PrimeField, d: usize) -> FFVector {
    let mut coords = vec![0; d];
    for c in coords.iter_mut().rev() {
        *c = i % field.q;
        i /= field.q;
    }
    FFVector { coords }
}

/// Counts of unordered equilateral triples with pairwise distinct vertices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TriangleCensus {
    /// Side class `r ≠ 0` → number of triples.
    pub counts_by_side: BTreeMap<u64, u64>,
    /// Distinct-point triples whose common side class is `0`.
    pub isotropic: u64,
    /// Sum of `counts_by_side`.
    pub total: u64,
    /// Number of `(anchor, pair)` visits the scan performed.
    pub visits: u128,
}

impl TriangleCensus {
    /// Nonzero side classes with at least one triangle.
    pub fn realized_classes(&self) -> usize {
        self.counts_by_side.values().filter(|&&c| c > 0).count()
    }
}

/// Pairwise norm table for a subset, row-major `n × n`.
fn pair_norms(e: &FFSubset) -> Vec<u32> {
    let n = e.len();
    let pts = &e.points;
    let field = e.field;
    (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (0..n).map(move |j| ff_norm(&pts[i], &pts[j], field) as u32))
        .collect()
}

/// Bucket of later points per (anchor, side class): `buckets[i][r]` lists `j > i`
/// with `‖p_i - p_j‖ = r`.
fn anchor_buckets(norms: &[u32], n: usize, q: usize) -> Vec<Vec<Vec<u32>>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut b = vec![Vec::new(); q];
            for j in i + 1..n {
                b[norms[i * n + j] as usize].push(j as u32);
            }
            b
        })
        .collect()
}

/// Number of pair visits the bucketed scan needs.
fn planned_visits(buckets: &[Vec<Vec<u32>>]) -> u128 {
    buckets
        .iter()
        .flat_map(|b| b.iter())
        .map(|v| {
            let m = v.len() as u128;
            m * m.saturating_sub(1) / 2
        })
        .sum()
}

/// Exact census with the default visit budget.
pub fn equilateral_census(e: &FFSubset) -> Result<TriangleCensus> {
    equilateral_census_with_budget(e, DEFAULT_TRIPLE_BUDGET)
}

/// Exact census of equilateral triples in `e`.
///
/// For every anchor `i`, the later points are bucketed by their side class to
/// `i`; a triple `{i, j, k}` with `i < j < k` is counted when `j, k` share a
/// bucket `r` and `‖p_j - p_k‖ = r`. Work is `Σ_i Σ_r C(|bucket|, 2)`, checked
/// against `budget` before scanning.
pub fn equilateral_census_with_budget(e: &FFSubset, budget: u128) -> Result<TriangleCensus> {
    let n = e.len();
    let q = e.field.q as usize;
    if n < 3 {
        return Ok(TriangleCensus::default());
    }
    let norms = pair_norms(e);
    let buckets = anchor_buckets(&norms, n, q);
    let needed = planned_visits(&buckets);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    // Per-anchor integer counts, summed in anchor order: identical to a sequential scan.
    let per_anchor: Vec<Vec<u64>> = buckets
        .par_iter()
        .map(|b| {
            let mut counts = vec![0u64; q];
            for (r, members) in b.iter().enumerate() {
                for (a, &j) in members.iter().enumerate() {
                    let row = j as usize * n;
                    for &k in &members[a + 1..] {
                        if norms[row + k as usize] as usize == r {
                            counts[r] += 1;
                        }
                    }
                }
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; q];
    for c in &per_anchor {
        for (acc, x) in counts.iter_mut().zip(c) {
            *acc += x;
        }
    }
    let counts_by_side: BTreeMap<u64, u64> =
        (1..q).map(|r| (r as u64, counts[r])).collect();
    let total = counts_by_side.values().sum();
    Ok(TriangleCensus {
        counts_by_side,
        isotropic: counts[0],
        total,
        visits: needed,
    })
}

/// Outcome of an exhaustive full-space search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Complete,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub q: u64,
    pub d: usize,
    pub sqrt3_exists: bool,
    /// `None` when the search was aborted.
    pub full_space_triangle_exists: Option<bool>,
    pub status: SearchStatus,
}

/// Whether `F_q` has `√3`, and whether `F_q^d` contains a nondegenerate
/// equilateral triple with nonzero side class.
///
/// The search anchors at the origin (the full space is translation
/// invariant), so it exits on the first triangle found.
pub fn obstruction_check(field: PrimeField, d: usize, budget: u128) -> Result<ObstructionReport> {
    let sqrt3_exists = legendre_sqrt(3 % field.q, field).is_some();
    let size = space_size(field, d).ok_or_else(|| precondition("q^d overflows"))? as u128;
    // Worst case: every pair of points visited once.
    let needed = size * size.saturating_sub(1) / 2;
    if needed > budget {
        return Ok(ObstructionReport {
            q: field.q,
            d,
            sqrt3_exists,
            full_space_triangle_exists: None,
            status: SearchStatus::Aborted,
        });
    }
    let origin = FFVector { coords: vec![0; d] };
    let mut by_class: Vec<Vec<FFVector>> = vec![Vec::new(); field.q as usize];
    for i in 1..size as u64 {
        let p = index_to_point(i, field, d);
        let r = ff_norm(&origin, &p, field);
        if r != 0 {
            by_class[r as usize].push(p);
        }
    }
    let found = by_class.iter().enumerate().any(|(r, pts)| {
        pts.iter().enumerate().any(|(a, y)| {
            pts[a + 1..].iter().any(|z| ff_norm(y, z, field) == r as u64)
        })
    });
    Ok(ObstructionReport {
        q: field.q,
        d,
        sqrt3_exists,
        full_space_triangle_exists: Some(found),
        status: SearchStatus::Complete,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub size: usize,
    pub trials: usize,
    pub seed: u64,
    /// Mean over trials of realized / realizable nonzero side classes.
    pub mean_fraction: f64,
    /// `q^{(2/3)d + 1}`.
    pub threshold: f64,
    pub above_threshold: bool,
}

/// Random-subset sweep of how many side classes are realized.
///
/// The realizable classes are those realized by the full space. Each size
/// uses the stream `ChaCha8(seed)` advanced across sizes in list order.
pub fn threshold_experiment(
    field: PrimeField,
    d: usize,
    sizes: &[usize],
    trials: usize,
    seed: u64,
    budget: u128,
) -> Result<Vec<ThresholdRow>> {
    if trials == 0 {
        return Err(precondition("trials must be positive"));
    }
    let full = FFSubset::full_space(field, d)?;
    let full_census = equilateral_census_with_budget(&full, budget)?;
    let realizable = full_census.realized_classes();
    let threshold = (field.q as f64).powf(2.0 * d as f64 / 3.0 + 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size > full.len() {
            return Err(precondition(format!("size {size} exceeds q^d")));
        }
        let mut acc = 0.0;
        for _ in 0..trials {
            let e = FFSubset::random(field, d, size, &mut rng)?;
            let c = equilateral_census_with_budget(&e, budget)?;
            if realizable > 0 {
                acc += c.realized_classes() as f64 / realizable as f64;
            }
        }
        rows.push(ThresholdRow {
            size,
            trials,
            seed,
            mean_fraction: acc / trials as f64,
            threshold,
            above_threshold: size as f64 >= threshold,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(q: u64) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    /// Ordered-triple brute force over every (x, y, z).
    fn brute_census(e: &FFSubset) -> (BTreeMap<u64, u64>, u64) {
        let pts = e.points();
        let fld = e.field();
        let mut by = BTreeMap::new();
        let mut iso = 0;
        for x in pts {
            for y in pts {
                for z in pts {
                    if x == y || y == z || x == z {
                        continue;
                    }
                    let r = ff_norm(x, y, fld);
                    if ff_norm(y, z, fld) == r && ff_norm(x, z, fld) == r {
                        if r == 0 {
                            iso += 1;
                        } else {
                            *by.entry(r).or_insert(0) += 1;
                        }
                    }
                }
            }
        }
        (by, iso)
    }

    #[test]
    fn field_construction() {
        assert!(PrimeField::new(2).is_err());
        assert!(PrimeField::new(9).is_err());
        assert!(PrimeField::new(1).is_err());
        assert_eq!(f(13).q(), 13);
    }

    #[test]
    fn sqrt_examples() {
        assert_eq!(legendre_sqrt(0, f(7)), Some(0));
        let r = legendre_sqrt(3, f(11)).unwrap();
        assert!(r == 5 || r == 6);
        assert_eq!(legendre_sqrt(3, f(5)), None);
    }

    #[test]
    fn sqrt_agrees_with_brute_force() {
        for q in primes_up_to(200).into_iter().filter(|&q| q > 2) {
            let fld = f(q);
            for a in 0..q {
                let brute = (0..q).any(|x| x * x % q == a);
                match legendre_sqrt(a, fld) {
                    Some(x) => assert_eq!(x * x % q, a),
                    None => assert!(!brute, "q={q} a={a}"),
                }
            }
        }
    }

    #[test]
    fn norm_examples() {
        let fld = f(5);
        let u = FFVector::new(vec![0, 0], fld);
        let v = FFVector::new(vec![1, 2], fld);
        assert_eq!(ff_norm(&u, &u, fld), 0);
        assert_eq!(ff_norm(&u, &v, fld), 0);
        let a = FFVector::new(vec![0; 4], fld);
        let b = FFVector::new(vec![1; 4], fld);
        assert_eq!(ff_norm(&a, &b, fld), 4);
    }

    #[test]
    fn subset_deduplicates() {
        let fld = f(5);
        let p = FFVector::new(vec![1, 2], fld);
        let e = FFSubset::new(fld, 2, vec![p.clone(), p, FFVector::new(vec![6, 2], fld)]).unwrap();
        assert_eq!(e.len(), 1);
    }

    #[test]
    fn census_matches_ordered_brute_force() {
        for &(q, d) in &[(5, 2), (7, 2), (13, 2), (3, 3)] {
            let e = FFSubset::full_space(f(q), d).unwrap();
            let c = equilateral_census(&e).unwrap();
            let (by, iso) = brute_census(&e);
            assert_eq!(c.isotropic * 6, iso, "q={q} d={d}");
            for r in 1..q {
                assert_eq!(c.counts_by_side[&r] * 6, by.get(&r).copied().unwrap_or(0));
            }
            assert_eq!(c.total, c.counts_by_side.values().sum::<u64>());
        }
    }

    #[test]
    fn census_examples() {
        let c5 = equilateral_census(&FFSubset::full_space(f(5), 2).unwrap()).unwrap();
        assert_eq!(c5.total, 0);
        let c13 = equilateral_census(&FFSubset::full_space(f(13), 2).unwrap()).unwrap();
        assert!(c13.total > 0);
        let fld = f(7);
        let two = FFSubset::new(fld, 2, vec![FFVector::new(vec![0, 0], fld), FFVector::new(vec![1, 0], fld)]).unwrap();
        assert_eq!(equilateral_census(&two).unwrap().total, 0);
    }

    #[test]
    fn budget_abort_is_explicit() {
        let e = FFSubset::full_space(f(13), 2).unwrap();
        match equilateral_census_with_budget(&e, 10) {
            Err(Error::BudgetExceeded { .. }) => {}
            other => panic!("expected abort, got {other:?}"),
        }
        let r = obstruction_check(f(101), 3, 1000).unwrap();
        assert_eq!(r.status, SearchStatus::Aborted);
        assert_eq!(r.full_space_triangle_exists, None);
    }

    #[test]
    fn obstruction_examples() {
        let r = obstruction_check(f(5), 2, DEFAULT_TRIPLE_BUDGET).unwrap();
        assert!(!r.sqrt3_exists);
        assert_eq!(r.full_space_triangle_exists, Some(false));
        let r = obstruction_check(f(11), 2, DEFAULT_TRIPLE_BUDGET).unwrap();
        assert!(r.sqrt3_exists);
        assert_eq!(r.full_space_triangle_exists, Some(true));
    }

    #[test]
    fn planar_obstruction_for_small_primes() {
        for q in primes_up_to(100).into_iter().filter(|&q| q > 2) {
            let fld = f(q);
            let r = obstruction_check(fld, 2, DEFAULT_TRIPLE_BUDGET).unwrap();
            assert_eq!(r.status, SearchStatus::Complete);
            if !r.sqrt3_exists {
                assert_eq!(r.full_space_triangle_exists, Some(false), "q={q}");
            }
        }
    }

    #[test]
    fn early_exit_search_agrees_with_census() {
        for &(q, d) in &[(5, 2), (7, 2), (11, 2), (5, 3), (7, 3)] {
            let c = equilateral_census(&FFSubset::full_space(f(q), d).unwrap()).unwrap();
            let r = obstruction_check(f(q), d, DEFAULT_TRIPLE_BUDGET).unwrap();
            assert_eq!(r.full_space_triangle_exists, Some(c.total > 0), "q={q} d={d}");
        }
    }

    #[test]
    fn threshold_full_space_and_tiny_sets() {
        let fld = f(13);
        let rows = threshold_experiment(fld, 2, &[3, 169], 3, 1, DEFAULT_TRIPLE_BUDGET).unwrap();
        assert!(rows[0].mean_fraction < 0.5);
        assert_eq!(rows[1].mean_fraction, 1.0);
        assert!(!rows[0].above_threshold);
    }

    #[test]
    fn threshold_is_seed_reproducible() {
        let fld = f(7);
        let a = threshold_experiment(fld, 2, &[10, 20], 4, 99, DEFAULT_TRIPLE_BUDGET).unwrap();
        let b = threshold_experiment(fld, 2, &[10, 20], 4, 99, DEFAULT_TRIPLE_BUDGET).unwrap();
        assert_eq!(a, b);
    }
}

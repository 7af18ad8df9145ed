//! Point families for scattered-data integration: tensor grids, seeded
//! uniform samples, and Halton sequences, plus CSV persistence.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the deterministic generator behind every seeded sample.
pub const PRNG_NAME: &str = "ChaCha8";

/// First 16 primes, the radical-inverse bases of the Halton sequence.
const HALTON_BASES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Hard cap on generated point counts, to catch runaway `n^q` requests.
const MAX_POINTS: usize = 20_000_000;

#[derive(Debug, Error)]
pub enum PointSetError {
    #[error("point set must contain at least one point")]
    Empty,
    #[error("Halton points support dimension <= {max}, requested {got}", max = HALTON_BASES.len())]
    DimensionTooLarge { got: usize },
    #[error("requested grid has {requested} points, the cap is {MAX_POINTS}")]
    TooManyPoints { requested: u128 },
    #[error("point {row} duplicates point {first}")]
    DuplicatePoint { row: usize, first: usize },
    #[error("line {line}: expected {expected} fields, found {got}")]
    RaggedRow { line: usize, expected: usize, got: usize },
    #[error("line {line}: cannot parse '{field}' as a finite number")]
    BadNumber { line: usize, field: String },
    #[error("no points remain after restriction to the ball")]
    EmptyAfterRestriction,
    #[error("file contains no data rows")]
    NoData,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How a point set came to be; recorded so seeded experiments stay
/// reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Provenance {
    Equidistant { grid_n: usize },
    Uniform { seed: u64, prng: String },
    Halton { offset: u64 },
    GaussLegendre { nodes_per_axis: usize },
    File,
}

/// An immutable list of pairwise-distinct points in `[-1, 1]^q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: Vec<f64>,
    dimension: usize,
    provenance: Provenance,
}

impl PointSet {
    /// Builds a point set from row-major coordinates, rejecting duplicates.
    pub fn from_coords(
        coords: Vec<f64>,
        dimension: usize,
        provenance: Provenance,
    ) -> Result<Self, PointSetError> {
        assert!(dimension >= 1);
        assert_eq!(coords.len() % dimension, 0);
        if coords.is_empty() {
            return Err(PointSetError::Empty);
        }
        let ps = Self {
            coords,
            dimension,
            provenance,
        };
        if let Some((row, first)) = ps.find_duplicate() {
            return Err(PointSetError::DuplicatePoint { row, first });
        }
        Ok(ps)
    }

    fn find_duplicate(&self) -> Option<(usize, usize)> {
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(self.len());
        for (n, p) in self.iter().enumerate() {
            // Normalize -0.0 so it hashes like 0.0.
            let key: Vec<u64> = p.iter().map(|&v| (v + 0.0).to_bits()).collect();
            if let Some(&first) = seen.get(&key) {
                return Some((n, first));
            }
            seen.insert(key, n);
        }
        None
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn point(&self, n: usize) -> &[f64] {
        &self.coords[n * self.dimension..(n + 1) * self.dimension]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dimension)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

fn check_count(q: usize, n: usize) -> Result<(), PointSetError> {
    if n == 0 {
        return Err(PointSetError::Empty);
    }
    let total = (n as u128).saturating_mul(q as u128);
    if total > MAX_POINTS as u128 {
        return Err(PointSetError::TooManyPoints {
            requested: n as u128,
        });
    }
    Ok(())
}

/// Tensor grid of `n` equally spaced values per axis, endpoints included.
/// `n = 1` places the single value at 0. The result has `n^q` points.
pub fn equidistant_grid(q: usize, n: usize) -> Result<PointSet, PointSetError> {
    assert!(q >= 1);
    if n == 0 {
        return Err(PointSetError::Empty);
    }
    let total = (n as u128).checked_pow(q as u32).unwrap_or(u128::MAX);
    if total > MAX_POINTS as u128 {
        return Err(PointSetError::TooManyPoints { requested: total });
    }
    let axis: Vec<f64> = if n == 1 {
        vec![0.0]
    } else {
        (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect()
    };
    let total = total as usize;
    let mut coords = Vec::with_capacity(total * q);
    let mut idx = vec![0usize; q];
    for _ in 0..total {
        coords.extend(idx.iter().map(|&i| axis[i]));
        // Odometer increment, last axis fastest.
        for a in (0..q).rev() {
            idx[a] += 1;
            if idx[a] < n {
                break;
            }
            idx[a] = 0;
        }
    }
    PointSet::from_coords(coords, q, Provenance::Equidistant { grid_n: n })
}

/// Radical inverse of `index` in base `b`, exact in integer arithmetic
/// before the final division.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut num = 0u64;
    let mut den = 1u64;
    while index > 0 {
        num = num * base + index % base;
        den *= base;
        index /= base;
    }
    num as f64 / den as f64
}

/// Halton points in `[-1, 1]^q` from indices `1..=n` (index 0 is skipped
/// because it lands on a cube corner in every base at once).
pub fn halton(q: usize, n: usize) -> Result<PointSet, PointSetError> {
    assert!(q >= 1);
    if q > HALTON_BASES.len() {
        return Err(PointSetError::DimensionTooLarge { got: q });
    }
    check_count(q, n)?;
    let mut coords = Vec::with_capacity(n * q);
    for index in 1..=n as u64 {
        for &base in &HALTON_BASES[..q] {
            coords.push(2.0 * radical_inverse(index, base) - 1.0);
        }
    }
    PointSet::from_coords(coords, q, Provenance::Halton { offset: 1 })
}

/// `n` i.i.d. uniform draws from `[-1, 1]^q` using seeded ChaCha8; the same
/// seed always reproduces the same points.
pub fn uniform_random(q: usize, n: usize, seed: u64) -> Result<PointSet, PointSetError> {
    assert!(q >= 1);
    check_count(q, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<f64> = (0..n * q).map(|_| rng.random_range(-1.0..=1.0)).collect();
    PointSet::from_coords(
        coords,
        q,
        Provenance::Uniform {
            seed,
            prng: PRNG_NAME.to_string(),
        },
    )
}

/// Keeps the subsequence of points with `||x||_2 <= 1`, order and
/// provenance preserved.
pub fn restrict_to_ball(ps: &PointSet) -> Result<PointSet, PointSetError> {
    let q = ps.dimension();
    let mut coords = Vec::new();
    for p in ps.iter() {
        if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            coords.extend_from_slice(p);
        }
    }
    if coords.is_empty() {
        return Err(PointSetError::EmptyAfterRestriction);
    }
    Ok(PointSet {
        coords,
        dimension: q,
        provenance: ps.provenance().clone(),
    })
}

/// Formats a float with 17 significant digits, enough to round-trip f64.
pub fn format_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

fn parse_field(line: usize, field: &str) -> Result<f64, PointSetError> {
    let v: f64 = field.trim().parse().map_err(|_| PointSetError::BadNumber {
        line,
        field: field.trim().to_string(),
    })?;
    if !v.is_finite() {
        return Err(PointSetError::BadNumber {
            line,
            field: field.trim().to_string(),
        });
    }
    Ok(v)
}

/// Loads a point set from CSV: one point per row, comma-separated decimal
/// fields, optional single header line.
pub fn load_points(path: impl AsRef<Path>) -> Result<PointSet, PointSetError> {
    let text = fs::read_to_string(path)?;
    let mut coords = Vec::new();
    let mut dimension = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if dimension.is_none() && coords.is_empty() {
            // A non-numeric first row is treated as a header.
            if fields.iter().any(|f| f.trim().parse::<f64>().is_err()) {
                continue;
            }
        }
        let q = *dimension.get_or_insert(fields.len());
        if fields.len() != q {
            return Err(PointSetError::RaggedRow {
                line,
                expected: q,
                got: fields.len(),
            });
        }
        for field in fields {
            coords.push(parse_field(line, field)?);
        }
    }
    let q = dimension.ok_or(PointSetError::NoData)?;
    PointSet::from_coords(coords, q, Provenance::File)
}

/// Writes a point set as CSV with a header row, plus a `.meta.json` sidecar
/// carrying the provenance.
pub fn save_points(ps: &PointSet, path: impl AsRef<Path>) -> Result<(), PointSetError> {
    let path = path.as_ref();
    let q = ps.dimension();
    let header: Vec<String> = (1..=q).map(|i| format!("x{i}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for p in ps.iter() {
        let row: Vec<String> = p.iter().map(|&v| format_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;

    #[derive(Serialize)]
    struct Meta<'a> {
        dimension: usize,
        n_points: usize,
        provenance: &'a Provenance,
    }
    let meta = serde_json::to_string_pretty(&Meta {
        dimension: q,
        n_points: ps.len(),
        provenance: ps.provenance(),
    })
    .expect("provenance serializes");
    fs::write(path.with_extension("meta.json"), meta)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equidistant_1d_includes_endpoints() {
        let ps = equidistant_grid(1, 3).unwrap();
        let pts: Vec<f64> = ps.iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn equidistant_counts() {
        assert_eq!(equidistant_grid(2, 2).unwrap().len(), 4);
        assert_eq!(equidistant_grid(2, 8).unwrap().len(), 64);
        assert_eq!(equidistant_grid(1, 1).unwrap().point(0), &[0.0]);
    }

    #[test]
    fn equidistant_coordinates_lie_on_the_progression() {
        let n = 5;
        let ps = equidistant_grid(2, n).unwrap();
        for p in ps.iter() {
            for &v in p {
                let i = (v + 1.0) * (n - 1) as f64 / 2.0;
                assert!((i - i.round()).abs() < 1e-12);
            }
        }
        assert_eq!(ps.len(), n * n);
    }

    #[test]
    fn halton_first_values() {
        let ps = halton(1, 3).unwrap();
        let pts: Vec<f64> = ps.iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0.0, -0.5, 0.5]);

        let ps = halton(2, 1).unwrap();
        assert_eq!(ps.point(0)[0], 0.0);
        assert!((ps.point(0)[1] - (-1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn halton_rejects_zero_points_and_large_dimension() {
        assert!(matches!(halton(1, 0), Err(PointSetError::Empty)));
        assert!(matches!(
            halton(17, 8),
            Err(PointSetError::DimensionTooLarge { got: 17 })
        ));
    }

    #[test]
    fn halton_points_are_distinct_up_to_a_million() {
        // Construction itself runs the duplicate check.
        let ps = halton(2, 1_000_000).unwrap();
        assert_eq!(ps.len(), 1_000_000);
    }

    #[test]
    fn uniform_is_deterministic_per_seed() {
        let a = uniform_random(2, 5, 7).unwrap();
        let b = uniform_random(2, 5, 7).unwrap();
        assert_eq!(a, b);
        let c = uniform_random(2, 5, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_mean_is_near_zero() {
        let ps = uniform_random(2, 10_000, 1).unwrap();
        for axis in 0..2 {
            let mean: f64 = ps.iter().map(|p| p[axis]).sum::<f64>() / ps.len() as f64;
            assert!(mean.abs() < 0.03, "axis {axis} mean {mean}");
        }
    }

    #[test]
    fn restrict_keeps_interior_and_boundary() {
        let ps = PointSet::from_coords(vec![0.0, 0.0, 1.0, 1.0], 2, Provenance::File).unwrap();
        let r = restrict_to_ball(&ps).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.point(0), &[0.0, 0.0]);

        let grid = equidistant_grid(2, 3).unwrap();
        let r = restrict_to_ball(&grid).unwrap();
        assert_eq!(r.len(), 5);
        for p in r.iter() {
            assert!(p.iter().map(|v| v * v).sum::<f64>() <= 1.0);
        }
    }

    #[test]
    fn restrict_is_identity_on_interior_sets() {
        let ps = uniform_random(2, 50, 3).unwrap();
        let scaled: Vec<f64> = ps.iter().flat_map(|p| p.iter().map(|v| v * 0.5)).collect();
        let ps = PointSet::from_coords(scaled, 2, Provenance::File).unwrap();
        let r = restrict_to_ball(&ps).unwrap();
        assert_eq!(r, ps);
    }

    #[test]
    fn restriction_can_empty_out() {
        let ps = PointSet::from_coords(vec![1.0, 1.0, -1.0, 1.0], 2, Provenance::File).unwrap();
        assert!(matches!(
            restrict_to_ball(&ps),
            Err(PointSetError::EmptyAfterRestriction)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        let ps = halton(2, 64).unwrap();
        save_points(&ps, &path).unwrap();
        let back = load_points(&path).unwrap();
        assert_eq!(back.len(), ps.len());
        for (a, b) in ps.iter().zip(back.iter()) {
            assert_eq!(a, b);
        }
        assert!(path.with_extension("meta.json").exists());
    }

    #[test]
    fn ragged_and_bad_rows_are_rejected_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");

        fs::write(&path, "0.0,0.0\n1.0\n").unwrap();
        assert!(matches!(
            load_points(&path),
            Err(PointSetError::RaggedRow { line: 2, expected: 2, got: 1 })
        ));

        fs::write(&path, "x1,x2\n0.0,0.0\n0.5,oops\n").unwrap();
        assert!(matches!(
            load_points(&path),
            Err(PointSetError::BadNumber { line: 3, .. })
        ));

        fs::write(&path, "0.0,0.0\n0.5,nan\n").unwrap();
        assert!(matches!(
            load_points(&path),
            Err(PointSetError::BadNumber { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_rows_are_rejected_with_indices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.csv");
        fs::write(&path, "0.0,0.5\n0.25,0.5\n0.0,0.5\n").unwrap();
        assert!(matches!(
            load_points(&path),
            Err(PointSetError::DuplicatePoint { row: 2, first: 0 })
        ));
    }

    /// Max deviation between empirical and exact mass over anchored boxes
    /// `[-1, u)`; a crude stand-in for the star discrepancy.
    fn box_count_deviation(ps: &PointSet, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let u: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let volume_fraction: f64 = u.iter().map(|&b| (b + 1.0) / 2.0).product();
            let count = ps
                .iter()
                .filter(|p| p.iter().zip(&u).all(|(&x, &b)| x < b))
                .count();
            let dev = (count as f64 / ps.len() as f64 - volume_fraction).abs();
            worst = worst.max(dev);
        }
        worst
    }

    #[test]
    fn halton_has_lower_box_discrepancy_than_uniform() {
        let n = 256;
        let h = halton(2, n).unwrap();
        let u = uniform_random(2, n, 5).unwrap();
        assert!(box_count_deviation(&h, 99) < box_count_deviation(&u, 99));
    }

    proptest! {
        #[test]
        fn prop_csv_round_trip_preserves_bits(
            rows in proptest::collection::vec(
                (any::<i32>(), any::<i32>()), 1..20)
        ) {
            // Map arbitrary i32 pairs to distinct-ish floats in [-1, 1].
            let coords: Vec<f64> = rows
                .iter()
                .flat_map(|&(a, b)| {
                    [a as f64 / i32::MAX as f64, b as f64 / i32::MAX as f64]
                })
                .collect();
            let ps = match PointSet::from_coords(coords, 2, Provenance::File) {
                Ok(ps) => ps,
                Err(_) => return Ok(()), // collisions: skip
            };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.csv");
            save_points(&ps, &path).unwrap();
            let back = load_points(&path).unwrap();
            prop_assert_eq!(back.len(), ps.len());
            for (a, b) in ps.iter().zip(back.iter()) {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn prop_restrict_to_ball_output_is_subset(n in 1usize..60, seed in 0u64..50) {
            let ps = uniform_random(2, n, seed).unwrap();
            if let Ok(r) = restrict_to_ball(&ps) {
                prop_assert!(r.len() <= ps.len());
                for p in r.iter() {
                    prop_assert!(p.iter().map(|v| v * v).sum::<f64>() <= 1.0);
                }
            }
        }
    }
}

//! Pass matrices built to order: fixed per-run pass counts, a fixed number of
//! all-pass rows and a fixed number of rows with at least one pass.

#![allow(clippy::needless_range_loop)]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Rows shuffled by `seed`. Panics when the constraints are unsatisfiable.
pub fn construct(
    tasks: usize,
    per_run: &[usize],
    all: usize,
    any: usize,
    seed: u64,
) -> Vec<Vec<bool>> {
    let k = per_run.len();
    assert!(all <= any && any <= tasks);
    let partial = any - all;
    let mut rows = vec![vec![false; k]; tasks];
    for row in rows.iter_mut().take(all) {
        row.fill(true);
    }
    let mut left: Vec<usize> = per_run
        .iter()
        .map(|p| {
            p.checked_sub(all)
                .expect("per-run count below all-pass rows")
        })
        .collect();
    // Every partial row takes one pass first, from the run with the most left over.
    for r in all..any {
        let j = (0..k)
            .max_by_key(|&j| (left[j], std::cmp::Reverse(j)))
            .unwrap();
        assert!(left[j] > 0, "too few passes for {partial} partial rows");
        rows[r][j] = true;
        left[j] -= 1;
    }
    // Then fill the rest, never completing a partial row.
    for j in 0..k {
        for r in all..any {
            if left[j] == 0 {
                break;
            }
            let row = &mut rows[r];
            if !row[j] && row.iter().filter(|c| **c).count() + 1 < k {
                row[j] = true;
                left[j] -= 1;
            }
        }
        assert_eq!(left[j], 0, "run {j} does not fit in the partial rows");
    }
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    rows
}

/// `(per-run counts, all-pass rows, rows with any pass)`, counted directly.
pub fn census(rows: &[Vec<bool>]) -> (Vec<usize>, usize, usize) {
    let k = rows.first().map_or(0, Vec::len);
    let per_run = (0..k)
        .map(|j| rows.iter().filter(|r| r[j]).count())
        .collect();
    let all = rows.iter().filter(|r| r.iter().all(|c| *c)).count();
    let any = rows.iter().filter(|r| r.iter().any(|c| *c)).count();
    (per_run, all, any)
}

/// Percentage of `num / den` rounded half-up to one decimal, decided by the
/// hundredths digit of the exact percentage.
pub fn tenths(num: u64, den: u64) -> f64 {
    let hundredths = num * 10_000 / den;
    let up = u64::from(hundredths % 10 >= 5);
    (hundredths / 10 + up) as f64 / 10.0
}

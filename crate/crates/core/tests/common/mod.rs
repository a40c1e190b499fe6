#![allow(dead_code)]

/// Every global alignment of `a` and `b`, as columns of (Option<a>, Option<b>).
pub fn all_alignments<T: Clone>(a: &[T], b: &[T]) -> Vec<Vec<(Option<T>, Option<T>)>> {
    if a.is_empty() && b.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    if !a.is_empty() && !b.is_empty() {
        for mut rest in all_alignments(&a[1..], &b[1..]) {
            rest.insert(0, (Some(a[0].clone()), Some(b[0].clone())));
            out.push(rest);
        }
    }
    if !a.is_empty() {
        for mut rest in all_alignments(&a[1..], b) {
            rest.insert(0, (Some(a[0].clone()), None));
            out.push(rest);
        }
    }
    if !b.is_empty() {
        for mut rest in all_alignments(a, &b[1..]) {
            rest.insert(0, (None, Some(b[0].clone())));
            out.push(rest);
        }
    }
    out
}

/// Maximum score over the exhaustive enumeration of global alignments.
pub fn brute_force_score<T: Clone + PartialEq>(
    a: &[T],
    b: &[T],
    match_score: f64,
    mismatch: f64,
    gap: f64,
) -> f64 {
    all_alignments(a, b)
        .into_iter()
        .map(|cols| {
            cols.iter()
                .map(|col| match col {
                    (Some(x), Some(y)) if x == y => match_score,
                    (Some(_), Some(_)) => mismatch,
                    _ => gap,
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

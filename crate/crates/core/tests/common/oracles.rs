//! Independent reference implementations shared by the test targets.

use std::collections::HashMap;

use msast::attention::AttentionMask;

/// Mask written from the window definition, independent of the library's
/// range helper.
pub fn oracle_mask(len: usize, window: usize, causal: bool) -> AttentionMask {
    AttentionMask::from_fn(len, |t, s| {
        if causal {
            s <= t && t - s < window
        } else {
            t.abs_diff(s) <= window / 2
        }
    })
}

/// Run-length labels by scanning for changes.
fn run_labels(x: &[usize]) -> Vec<usize> {
    let mut out = vec![x[0]];
    for w in x.windows(2) {
        if w[0] != w[1] {
            out.push(w[1]);
        }
    }
    out
}

/// Levenshtein distance by memoized recursion on suffixes.
fn lev(a: &[usize], b: &[usize], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len() + b.len();
    }
    if let Some(&d) = memo.get(&(a.len(), b.len())) {
        return d;
    }
    let d = (lev(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]))
        .min(lev(&a[1..], b, memo) + 1)
        .min(lev(a, &b[1..], memo) + 1);
    memo.insert((a.len(), b.len()), d);
    d
}

pub fn oracle_edit(pred: &[usize], gt: &[usize]) -> f64 {
    let (p, g) = (run_labels(pred), run_labels(gt));
    let d = lev(&p, &g, &mut HashMap::new());
    100.0 * (1.0 - d as f64 / p.len().max(g.len()) as f64)
}

/// Frame-set segments: `(label, frames)`.
fn frame_segments(x: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut out: Vec<(usize, Vec<usize>)> = Vec::new();
    for (t, &l) in x.iter().enumerate() {
        match out.last_mut() {
            Some((last, frames)) if *last == l => frames.push(t),
            _ => out.push((l, vec![t])),
        }
    }
    out
}

/// The greedy rule with IoU counted frame by frame.
pub fn oracle_f1(pred: &[usize], gt: &[usize], tau: f64) -> (u64, u64, u64) {
    let (ps, gs) = (frame_segments(pred), frame_segments(gt));
    let mut used = vec![false; gs.len()];
    let (mut tp, mut fp) = (0, 0);
    for (pl, pf) in &ps {
        let ious: Vec<f64> = gs
            .iter()
            .map(|(gl, gf)| {
                if gl != pl {
                    return 0.0;
                }
                let inter = pf.iter().filter(|t| gf.contains(t)).count();
                let union = pf.len() + gf.len() - inter;
                inter as f64 / union as f64
            })
            .collect();
        let best = ious.iter().cloned().fold(0.0, f64::max);
        let j = ious.iter().position(|&x| x == best).unwrap();
        if best > 0.0 && best >= tau && !used[j] {
            used[j] = true;
            tp += 1;
        } else {
            fp += 1;
        }
    }
    (tp, fp, used.iter().filter(|u| !**u).count() as u64)
}

//! Onset-based note precision/recall/F1.
//!
//! A reference note and an estimated note may match iff their pitches are
//! equal and their onsets differ by at most the tolerance (closed interval,
//! default 50 ms). Scoring uses a maximum-cardinality bipartite matching
//! rather than nearest-neighbor greedy, so results are order-independent
//! and reproducible.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::notes::NoteList;

/// Matched-note counts and the derived scores for one evaluation.
///
/// Precision/recall/F1 are defined as 0 when their denominators vanish, so
/// degenerate transcriber output still yields a defined score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalResult {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalResult {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Maximum-cardinality matching between reference and estimate.
///
/// Returns (ref_index, est_index) pairs into the sorted lists, ascending by
/// reference index; each note appears in at most one pair.
pub fn match_notes(
    reference: &NoteList,
    estimate: &NoteList,
    onset_tolerance_s: f64,
) -> Vec<(usize, usize)> {
    assert!(
        onset_tolerance_s > 0.0,
        "onset tolerance must be positive, got {onset_tolerance_s}"
    );
    let adjacency = candidate_edges(reference, estimate, onset_tolerance_s);
    let match_right = hopcroft_karp(&adjacency, estimate.len());
    let mut pairs: Vec<(usize, usize)> = match_right
        .iter()
        .enumerate()
        .filter_map(|(est, &r)| r.map(|ref_idx| (ref_idx, est)))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Score an estimate against a reference.
pub fn evaluate(reference: &NoteList, estimate: &NoteList, onset_tolerance_s: f64) -> EvalResult {
    let tp = match_notes(reference, estimate, onset_tolerance_s).len() as u64;
    EvalResult::from_counts(tp, estimate.len() as u64 - tp, reference.len() as u64 - tp)
}

/// Candidate edges per reference note: estimate indices with equal pitch
/// and onset within the closed tolerance window. Estimates are sorted by
/// onset, so each row comes from a binary-searched window.
fn candidate_edges(reference: &NoteList, estimate: &NoteList, tolerance_s: f64) -> Vec<Vec<usize>> {
    let est = estimate.notes();
    reference
        .iter()
        .map(|r| {
            let lo = est.partition_point(|e| e.onset_s < r.onset_s - tolerance_s);
            let mut row = Vec::new();
            for (offset, e) in est[lo..].iter().enumerate() {
                if e.onset_s > r.onset_s + tolerance_s {
                    break;
                }
                if e.pitch == r.pitch && (e.onset_s - r.onset_s).abs() <= tolerance_s {
                    row.push(lo + offset);
                }
            }
            row
        })
        .collect()
}

const UNMATCHED: usize = usize::MAX;

/// Hopcroft–Karp maximum bipartite matching.
///
/// `adjacency[left]` lists the right vertices reachable from `left`.
/// Returns, for each right vertex, the left vertex matched to it.
fn hopcroft_karp(adjacency: &[Vec<usize>], n_right: usize) -> Vec<Option<usize>> {
    let n_left = adjacency.len();
    let mut match_left = vec![UNMATCHED; n_left];
    let mut match_right = vec![UNMATCHED; n_right];
    let mut dist = vec![0usize; n_left];
    let mut queue = VecDeque::new();

    loop {
        // BFS from free left vertices builds the layered graph.
        queue.clear();
        let mut found_augmenting = false;
        for left in 0..n_left {
            if match_left[left] == UNMATCHED {
                dist[left] = 0;
                queue.push_back(left);
            } else {
                dist[left] = UNMATCHED;
            }
        }
        while let Some(left) = queue.pop_front() {
            for &right in &adjacency[left] {
                match match_right[right] {
                    UNMATCHED => found_augmenting = true,
                    next_left => {
                        if dist[next_left] == UNMATCHED {
                            dist[next_left] = dist[left] + 1;
                            queue.push_back(next_left);
                        }
                    }
                }
            }
        }
        if !found_augmenting {
            break;
        }
        // DFS along layers augments a maximal set of disjoint shortest paths.
        for left in 0..n_left {
            if match_left[left] == UNMATCHED {
                augment(
                    adjacency,
                    &mut match_left,
                    &mut match_right,
                    &mut dist,
                    left,
                );
            }
        }
    }

    match_right
        .into_iter()
        .map(|l| (l != UNMATCHED).then_some(l))
        .collect()
}

/// Layered DFS with an explicit stack; augmenting paths through dense
/// single-pitch passages can get long, so recursion is avoided.
fn augment(
    adjacency: &[Vec<usize>],
    match_left: &mut [usize],
    match_right: &mut [usize],
    dist: &mut [usize],
    start: usize,
) -> bool {
    struct Frame {
        left: usize,
        layer: usize,
        edge: usize,
        chosen: usize,
    }
    let visit = |dist: &mut [usize], left: usize| std::mem::replace(&mut dist[left], UNMATCHED);
    let mut frames = vec![Frame {
        left: start,
        layer: visit(dist, start),
        edge: 0,
        chosen: UNMATCHED,
    }];

    'dfs: while let Some(top) = frames.last_mut() {
        let left = top.left;
        let layer = top.layer;
        while top.edge < adjacency[left].len() {
            let right = adjacency[left][top.edge];
            top.edge += 1;
            let owner = match_right[right];
            if owner == UNMATCHED {
                // Free right vertex: flip the whole alternating path.
                top.chosen = right;
                for frame in &frames {
                    match_right[frame.chosen] = frame.left;
                    match_left[frame.left] = frame.chosen;
                }
                return true;
            }
            if dist[owner] == layer + 1 {
                top.chosen = right;
                frames.push(Frame {
                    left: owner,
                    layer: visit(dist, owner),
                    edge: 0,
                    chosen: UNMATCHED,
                });
                continue 'dfs;
            }
        }
        frames.pop();
    }
    false
}

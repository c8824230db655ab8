use rand::{Rng, RngCore};

use super::edge_sampler::{edge_history_log_density, open_unit, sample_edge_history, GuidedTuning};
use super::{random_edge, Category, Context, Outcome, Proposal};
use crate::error::Result;
use crate::history::{EdgeHistory, EventKind, IndelEvent};
use crate::mcmc::{ChainState, Dirty};

/// Redraws the whole history of one edge with both end lengths fixed.
#[derive(Clone, Copy, Debug)]
pub struct EdgeResample {
    guided: bool,
}

impl EdgeResample {
    pub fn basic() -> Self {
        Self { guided: false }
    }

    pub fn guided() -> Self {
        Self { guided: true }
    }

    fn tuning(&self, ctx: &Context) -> GuidedTuning {
        if self.guided {
            ctx.tuning.guided
        } else {
            GuidedTuning::BASIC
        }
    }
}

impl Proposal for EdgeResample {
    fn name(&self) -> &str {
        if self.guided {
            "edge_guided"
        } else {
            "edge_basic"
        }
    }

    fn category(&self) -> Category {
        Category::EdgeHistory
    }

    fn propose(&self, state: &ChainState, ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let tuning = self.tuning(ctx);
        let model = state.indel_model();
        let v = random_edge(state.tree(), rng);
        let old = state.history().edge(v);
        let new = sample_edge_history(model, &tuning, old.parent_len, old.child_len, old.span, rng);
        let ln_forward = edge_history_log_density(model, &tuning, &new);
        let ln_reverse = edge_history_log_density(model, &tuning, old);
        let mut history = state.history().clone();
        history.set_edge(v, new);
        Ok(Some(Outcome {
            tree: state.tree().clone(),
            history,
            params: state.params().clone(),
            dirty: Dirty::histories(vec![v]),
            ln_forward,
            ln_reverse,
            ln_jacobian: 0.0,
        }))
    }
}

/// Redraws the events inside a random time window of one edge, keeping the
/// lengths at both window ends.
#[derive(Clone, Copy, Debug, Default)]
pub struct HistorySegment;

/// Splits `h` at times `a < b`: events before, the window as its own history
/// (times relative to `a`), and events after.
fn split_window(h: &EdgeHistory, a: f64, b: f64) -> (Vec<IndelEvent>, EdgeHistory, Vec<IndelEvent>) {
    let mut before = Vec::new();
    let mut inside = Vec::new();
    let mut after = Vec::new();
    let mut n_a = h.parent_len;
    for e in &h.events {
        if e.time <= a {
            n_a = e.apply_len(n_a);
            before.push(*e);
        } else if e.time < b {
            inside.push(IndelEvent { time: e.time - a, ..*e });
        } else {
            after.push(*e);
        }
    }
    (before, EdgeHistory::new(inside, n_a, b - a), after)
}

impl Proposal for HistorySegment {
    fn name(&self) -> &str {
        "edge_segment"
    }

    fn category(&self) -> Category {
        Category::EdgeHistory
    }

    fn propose(&self, state: &ChainState, ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let tuning = ctx.tuning.guided;
        let model = state.indel_model();
        let v = random_edge(state.tree(), rng);
        let old = state.history().edge(v);
        let (t1, t2) = (open_unit(rng) * old.span, open_unit(rng) * old.span);
        let (a, b) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        if !(b > a) {
            return Ok(None);
        }
        let (before, window, after) = split_window(old, a, b);
        let fresh = sample_edge_history(model, &tuning, window.parent_len, window.child_len, window.span, rng);
        let ln_forward = edge_history_log_density(model, &tuning, &fresh);
        let ln_reverse = edge_history_log_density(model, &tuning, &window);
        let n_before = before.len();
        let mut events = before;
        events.extend(fresh.events.iter().map(|e| IndelEvent { time: e.time + a, ..*e }));
        events.extend(after);
        let new = EdgeHistory::new(events, old.parent_len, old.span);
        let (re_before, re_window, _) = split_window(&new, a, b);
        if new.validate().is_err() || re_before.len() != n_before || re_window.n_events() != fresh.n_events() {
            // Rounding pushed an event across a window end.
            return Ok(None);
        }
        let mut history = state.history().clone();
        history.set_edge(v, new);
        Ok(Some(Outcome {
            tree: state.tree().clone(),
            history,
            params: state.params().clone(),
            dirty: Dirty::histories(vec![v]),
            ln_forward,
            ln_reverse,
            ln_jacobian: 0.0,
        }))
    }
}

/// Moves one event a few positions along its sequence; symmetric, and only
/// the alignment changes.
#[derive(Clone, Copy, Debug, Default)]
pub struct EventShift;

impl Proposal for EventShift {
    fn name(&self) -> &str {
        "event_shift"
    }

    fn category(&self) -> Category {
        Category::EdgeHistory
    }

    fn propose(&self, state: &ChainState, ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let total = state.history().n_events();
        let max = ctx.tuning.shift_max.max(1);
        if total == 0 {
            return Ok(None);
        }
        let mut pick = rng.random_range(0..total);
        let mut offset = rng.random_range(1..=max) as i64;
        if rng.random::<bool>() {
            offset = -offset;
        }
        for (v, h) in state.history().edges() {
            if pick >= h.n_events() {
                pick -= h.n_events();
                continue;
            }
            let (e, before, _) = h.steps().nth(pick).expect("index within edge");
            let position = e.position as i64 + offset;
            let limit = match e.kind {
                EventKind::Insertion => before as i64,
                EventKind::Deletion => (before - e.size) as i64,
            };
            if position < 0 || position > limit {
                return Ok(None);
            }
            let mut new = h.clone();
            new.events[pick].position = position as usize;
            let mut history = state.history().clone();
            history.set_edge(v, new);
            return Ok(Some(Outcome {
                tree: state.tree().clone(),
                history,
                params: state.params().clone(),
                dirty: Dirty::histories(vec![v]),
                ln_forward: 0.0,
                ln_reverse: 0.0,
                ln_jacobian: 0.0,
            }));
        }
        unreachable!("event index beyond the history")
    }
}

/// Adds or removes two consecutive events of opposite kind and equal size
/// on one edge. The net length change is zero, so the rest of the edge is
/// untouched. Removing a deletion followed by an insertion turns a gapped
/// block into matched residues; an insertion deleted again at once is
/// invisible in the alignment.
#[derive(Clone, Copy, Debug, Default)]
pub struct IndelPair;

fn is_pair(first: &IndelEvent, second: &IndelEvent) -> bool {
    first.kind != second.kind && first.size == second.size
}

/// Indices `i` on edge `h` where events `i` and `i + 1` form a pair.
fn pairs(h: &EdgeHistory) -> impl Iterator<Item = usize> + '_ {
    h.events.windows(2).enumerate().filter(|(_, w)| is_pair(&w[0], &w[1])).map(|(i, _)| i)
}

/// Number of valid positions for `kind` of `size` on a sequence of length `n`.
fn position_count(kind: EventKind, n: usize, size: usize) -> usize {
    match kind {
        EventKind::Insertion => n + 1,
        EventKind::Deletion => (n + 1).saturating_sub(size),
    }
}

impl IndelPair {
    /// Log-density of adding a pair starting with `kind` between times `a`
    /// and `b` on an edge of `span`, from length `n`, excluding the edge
    /// choice.
    fn ln_birth(model: &crate::indel::IndelModel, span: f64, n: usize, kind: EventKind, size: usize) -> f64 {
        let mid = match kind {
            EventKind::Insertion => n + size,
            EventKind::Deletion => n - size,
        };
        let second = match kind {
            EventKind::Insertion => EventKind::Deletion,
            EventKind::Deletion => EventKind::Insertion,
        };
        0.5f64.ln() + (2.0 / (span * span)).ln() + model.ln_i(size)
            - (position_count(kind, n, size) as f64).ln()
            - (position_count(second, mid, size) as f64).ln()
    }
}

impl Proposal for IndelPair {
    fn name(&self) -> &str {
        "indel_pair"
    }

    fn category(&self) -> Category {
        Category::EdgeHistory
    }

    fn propose(&self, state: &ChainState, _ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let model = state.indel_model();
        let tree = state.tree();
        let ln_edge = -(tree.n_edges() as f64).ln();
        let before: usize = state.history().edges().map(|(_, h)| pairs(h).count()).sum();
        let (v, new, ln_forward, ln_reverse) = if rng.random::<bool>() {
            let v = random_edge(tree, rng);
            let old = state.history().edge(v);
            let (t1, t2) = (open_unit(rng) * old.span, open_unit(rng) * old.span);
            let (a, b) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let k = old.events.partition_point(|e| e.time <= a);
            if !(b > a) || old.events.get(k).is_some_and(|e| e.time < b) || old.events[..k].last().is_some_and(|e| e.time >= a) {
                return Ok(None);
            }
            let n = old.steps().take(k).last().map_or(old.parent_len, |(_, _, after)| after);
            let size = model.sample_insertion_size(rng);
            let (first, second) = if rng.random::<bool>() {
                let first = IndelEvent::insertion(a, rng.random_range(0..=n), size);
                (first, IndelEvent::deletion(b, rng.random_range(0..=n), size))
            } else {
                if n < size {
                    return Ok(None);
                }
                let first = IndelEvent::deletion(a, rng.random_range(0..=n - size), size);
                (first, IndelEvent::insertion(b, rng.random_range(0..=n - size), size))
            };
            let mut events = old.events.clone();
            events.splice(k..k, [first, second]);
            let new = EdgeHistory::new(events, old.parent_len, old.span);
            let after = before + pairs(&new).count() - pairs(old).count();
            let fwd = ln_edge + Self::ln_birth(model, old.span, n, first.kind, size);
            (v, new, fwd, -(after as f64).ln())
        } else {
            if before == 0 {
                return Ok(None);
            }
            let mut pick = rng.random_range(0..before);
            let (v, old, i) = state
                .history()
                .edges()
                .find_map(|(v, h)| {
                    let c = pairs(h).count();
                    if pick < c {
                        Some((v, h, pairs(h).nth(pick).unwrap()))
                    } else {
                        pick -= c;
                        None
                    }
                })
                .expect("pair index within the tree");
            let n = old.steps().nth(i).map(|(_, len, _)| len).unwrap();
            let first = old.events[i];
            let mut events = old.events.clone();
            events.drain(i..i + 2);
            let new = EdgeHistory::new(events, old.parent_len, old.span);
            let rev = ln_edge + Self::ln_birth(model, old.span, n, first.kind, first.size);
            (v, new, -(before as f64).ln(), rev)
        };
        let mut history = state.history().clone();
        history.set_edge(v, new);
        Ok(Some(Outcome {
            tree: tree.clone(),
            history,
            params: state.params().clone(),
            dirty: Dirty::histories(vec![v]),
            ln_forward,
            ln_reverse,
            ln_jacobian: 0.0,
        }))
    }
}

/// Splits one event into two adjacent events of the same kind, or merges
/// such a pair. Both leave the alignment as it was, so only the indel prior
/// decides acceptance.
#[derive(Clone, Copy, Debug, Default)]
pub struct EventSplit;

/// True when `second`, directly after `first`, continues the same block.
fn is_continuation(first: &IndelEvent, second: &IndelEvent) -> bool {
    first.kind == second.kind
        && match first.kind {
            EventKind::Insertion => second.position == first.position + first.size,
            EventKind::Deletion => second.position == first.position,
        }
}

fn mergeable(h: &EdgeHistory) -> impl Iterator<Item = usize> + '_ {
    h.events.windows(2).enumerate().filter(|(_, w)| is_continuation(&w[0], &w[1])).map(|(i, _)| i)
}

fn splittable(h: &EdgeHistory) -> impl Iterator<Item = usize> + '_ {
    h.events.iter().enumerate().filter(|(_, e)| e.size >= 2).map(|(i, _)| i)
}

/// Finds the `pick`-th item of `select` across all edges.
fn nth_over_edges<'a, I: Iterator<Item = usize> + 'a>(
    edges: impl Iterator<Item = (crate::tree::NodeId, &'a EdgeHistory)>,
    mut pick: usize,
    select: impl Fn(&'a EdgeHistory) -> I,
) -> Option<(crate::tree::NodeId, &'a EdgeHistory, usize)> {
    for (v, h) in edges {
        let c = select(h).count();
        if pick < c {
            return select(h).nth(pick).map(|i| (v, h, i));
        }
        pick -= c;
    }
    None
}

impl EventSplit {
    /// Log-density of splitting event `i` of `h` at size `first`, given
    /// `n_split` candidates in the whole tree.
    fn ln_split(h: &EdgeHistory, i: usize, n_split: usize) -> f64 {
        let e = &h.events[i];
        let until = h.events.get(i + 1).map_or(h.span, |x| x.time);
        -(n_split as f64).ln() - ((e.size - 1) as f64).ln() - (until - e.time).ln()
    }
}

impl Proposal for EventSplit {
    fn name(&self) -> &str {
        "event_split"
    }

    fn category(&self) -> Category {
        Category::EdgeHistory
    }

    fn propose(&self, state: &ChainState, _ctx: &Context, rng: &mut dyn RngCore) -> Result<Option<Outcome>> {
        let history = state.history();
        let n_split: usize = history.edges().map(|(_, h)| splittable(h).count()).sum();
        let n_merge: usize = history.edges().map(|(_, h)| mergeable(h).count()).sum();
        let (v, new, ln_forward, ln_reverse) = if rng.random::<bool>() {
            if n_split == 0 {
                return Ok(None);
            }
            let (v, old, i) = nth_over_edges(history.edges(), rng.random_range(0..n_split), splittable)
                .expect("split index within the tree");
            let e = old.events[i];
            let until = old.events.get(i + 1).map_or(old.span, |x| x.time);
            let time = e.time + open_unit(rng) * (until - e.time);
            let first = rng.random_range(1..e.size);
            if !(time > e.time && time < until) {
                return Ok(None);
            }
            let position = match e.kind {
                EventKind::Insertion => e.position + first,
                EventKind::Deletion => e.position,
            };
            let mut events = old.events.clone();
            events[i].size = first;
            events.insert(i + 1, IndelEvent { time, kind: e.kind, position, size: e.size - first });
            let new = EdgeHistory::new(events, old.parent_len, old.span);
            let after = n_merge + mergeable(&new).count() - mergeable(old).count();
            (v, new, Self::ln_split(old, i, n_split), -(after as f64).ln())
        } else {
            if n_merge == 0 {
                return Ok(None);
            }
            let (v, old, i) = nth_over_edges(history.edges(), rng.random_range(0..n_merge), mergeable)
                .expect("merge index within the tree");
            let mut events = old.events.clone();
            let second = events.remove(i + 1);
            events[i].size += second.size;
            let new = EdgeHistory::new(events, old.parent_len, old.span);
            let after = n_split + splittable(&new).count() - splittable(old).count();
            (v, new.clone(), -(n_merge as f64).ln(), Self::ln_split(&new, i, after))
        };
        let mut history = history.clone();
        history.set_edge(v, new);
        Ok(Some(Outcome {
            tree: state.tree().clone(),
            history,
            params: state.params().clone(),
            dirty: Dirty {
                alignment: false,
                ..Dirty::histories(vec![v])
            },
            ln_forward,
            ln_reverse,
            ln_jacobian: 0.0,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_split_round_trips() {
        let h = EdgeHistory::new(
            vec![
                IndelEvent::insertion(0.1, 0, 2),
                IndelEvent::deletion(0.3, 1, 1),
                IndelEvent::insertion(0.6, 3, 1),
            ],
            4,
            1.0,
        );
        let (before, window, after) = split_window(&h, 0.2, 0.5);
        assert_eq!(before.len(), 1);
        assert_eq!(after.len(), 1);
        assert_eq!(window.parent_len, 6);
        assert_eq!(window.child_len, 5);
        assert!((window.events[0].time - 0.1).abs() < 1e-15);
        assert!((window.span - 0.3).abs() < 1e-15);
    }
}

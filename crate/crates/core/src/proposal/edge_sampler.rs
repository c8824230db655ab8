//! Proposal of a single-edge indel history with both end lengths fixed.
//!
//! A provisional history runs forward from the parent length under the indel
//! process. If it ends at the wrong length, one last event with the exact
//! missing size is appended at a uniform time after the previous event. The
//! guided variant biases that run toward the target length; with all weights
//! zero it is the plain forward run.

use rand::Rng;

use crate::history::{EdgeHistory, EventKind, IndelEvent};
use crate::indel::IndelModel;

/// Weights of the guided kernel; all zero gives the basic kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidedTuning {
    /// Chance of stopping outright whenever the current length equals the target.
    pub w_stop: f64,
    /// Extra probability mass moved to the event type that closes the gap.
    pub w_dir: f64,
    /// Chance that a gap-closing event has exactly the missing size.
    pub w_exact: f64,
}

impl GuidedTuning {
    pub const BASIC: Self = Self {
        w_stop: 0.0,
        w_dir: 0.0,
        w_exact: 0.0,
    };

    pub fn is_valid(&self) -> bool {
        [self.w_stop, self.w_dir, self.w_exact]
            .iter()
            .all(|w| (0.0..1.0).contains(w))
    }
}

impl Default for GuidedTuning {
    fn default() -> Self {
        Self {
            w_stop: 0.5,
            w_dir: 0.8,
            w_exact: 0.3,
        }
    }
}

/// Uniform draw from the open interval `(0, 1)`.
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn insertion_weight(model: &IndelModel, tuning: &GuidedTuning, n: usize, target: usize) -> (f64, f64) {
    let eta = model.eta(n);
    let p_ins = (n + 1) as f64 * model.lambda() / eta;
    let p_del = model.f(n) * model.mu() / eta;
    let w = tuning.w_dir;
    match n.cmp(&target) {
        std::cmp::Ordering::Less => (w + (1.0 - w) * p_ins, (1.0 - w) * p_del),
        std::cmp::Ordering::Greater => ((1.0 - w) * p_ins, w + (1.0 - w) * p_del),
        std::cmp::Ordering::Equal => (p_ins, p_del),
    }
}

fn closes_gap(kind: EventKind, n: usize, target: usize) -> bool {
    match kind {
        EventKind::Insertion => n < target,
        EventKind::Deletion => n > target,
    }
}

fn ln_size(model: &IndelModel, tuning: &GuidedTuning, kind: EventKind, size: usize, n: usize, target: usize) -> f64 {
    let ln_model = match kind {
        EventKind::Insertion => model.ln_i(size),
        EventKind::Deletion => model.ln_deletion_size(size, n),
    };
    if closes_gap(kind, n, target) && tuning.w_exact > 0.0 {
        let exact = if size == n.abs_diff(target) { tuning.w_exact } else { 0.0 };
        ((1.0 - tuning.w_exact) * ln_model.exp() + exact).ln()
    } else {
        ln_model
    }
}

fn n_positions(kind: EventKind, size: usize, n: usize) -> usize {
    match kind {
        EventKind::Insertion => n + 1,
        EventKind::Deletion => n + 1 - size,
    }
}

/// Log-density of drawing `e` as the next provisional event from length `n`
/// at time `t`.
fn ln_step(model: &IndelModel, tuning: &GuidedTuning, e: &IndelEvent, n: usize, t: f64, target: usize) -> f64 {
    let eta = model.eta(n);
    let continue_ln = if n == target { (-tuning.w_stop).ln_1p() } else { 0.0 };
    let (p_ins, p_del) = insertion_weight(model, tuning, n, target);
    let ln_type = match e.kind {
        EventKind::Insertion => p_ins.ln(),
        EventKind::Deletion => p_del.ln(),
    };
    continue_ln + eta.ln() - eta * (e.time - t) + ln_type + ln_size(model, tuning, e.kind, e.size, n, target)
        - (n_positions(e.kind, e.size, n) as f64).ln()
}

/// Log-probability that the provisional run adds nothing after time `t`.
fn ln_stop(model: &IndelModel, tuning: &GuidedTuning, n: usize, t: f64, span: f64, target: usize) -> f64 {
    let survive = -model.eta(n) * (span - t);
    if n == target && tuning.w_stop > 0.0 {
        (tuning.w_stop + (1.0 - tuning.w_stop) * survive.exp()).ln()
    } else {
        survive
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln Q(h | span, parent_len, child_len)` for a structurally valid history.
pub fn edge_history_log_density(model: &IndelModel, tuning: &GuidedTuning, h: &EdgeHistory) -> f64 {
    let target = h.child_len;
    let k = h.events.len();
    if k == 0 {
        return if h.parent_len == target {
            ln_stop(model, tuning, h.parent_len, 0.0, h.span, target)
        } else {
            f64::NEG_INFINITY
        };
    }
    let mut acc = 0.0;
    let mut n = h.parent_len;
    let mut t = 0.0;
    for e in &h.events[..k - 1] {
        acc += ln_step(model, tuning, e, n, t, target);
        n = e.apply_len(n);
        t = e.time;
    }
    let last = &h.events[k - 1];
    let generated = ln_step(model, tuning, last, n, t, target) + ln_stop(model, tuning, target, last.time, h.span, target);
    // The last event doubles as the repair of a provisional run that ended
    // at length `n`; repairs only happen when that length is off target.
    let repair = if n != target {
        -model.eta(n) * (h.span - t) - (h.span - t).ln() - (n_positions(last.kind, last.size, n) as f64).ln()
    } else {
        f64::NEG_INFINITY
    };
    acc + log_sum_exp(generated, repair)
}

/// Draws a history from `parent_len` to `child_len` over `span`.
pub fn sample_edge_history<R: Rng + ?Sized>(
    model: &IndelModel,
    tuning: &GuidedTuning,
    parent_len: usize,
    child_len: usize,
    span: f64,
    rng: &mut R,
) -> EdgeHistory {
    let target = child_len;
    let mut events = Vec::new();
    let mut n = parent_len;
    let mut t = 0.0;
    loop {
        if n == target && tuning.w_stop > 0.0 && rng.random::<f64>() < tuning.w_stop {
            break;
        }
        let eta = model.eta(n);
        let next = t - open_unit(rng).ln() / eta;
        if next >= span {
            if n != target {
                events.push(repair_event(n, target, t, span, rng));
            }
            break;
        }
        if next <= t {
            // The waiting time vanished in rounding; redraw it.
            continue;
        }
        t = next;
        let (p_ins, _) = insertion_weight(model, tuning, n, target);
        let kind = if rng.random::<f64>() < p_ins {
            EventKind::Insertion
        } else {
            EventKind::Deletion
        };
        let size = if closes_gap(kind, n, target) && rng.random::<f64>() < tuning.w_exact {
            n.abs_diff(target)
        } else {
            match kind {
                EventKind::Insertion => model.sample_insertion_size(rng),
                EventKind::Deletion => model.sample_deletion_size(n, rng),
            }
        };
        let position = rng.random_range(0..n_positions(kind, size, n));
        let e = IndelEvent {
            time: t,
            kind,
            position,
            size,
        };
        n = e.apply_len(n);
        events.push(e);
    }
    EdgeHistory {
        events,
        parent_len,
        child_len,
        span,
    }
}

fn repair_event<R: Rng + ?Sized>(n: usize, target: usize, t: f64, span: f64, rng: &mut R) -> IndelEvent {
    let time = loop {
        let s = t + open_unit(rng) * (span - t);
        if s > t && s < span {
            break s;
        }
    };
    let (kind, size) = if target > n {
        (EventKind::Insertion, target - n)
    } else {
        (EventKind::Deletion, n - target)
    };
    IndelEvent {
        time,
        kind,
        position: rng.random_range(0..n_positions(kind, size, n)),
        size,
    }
}

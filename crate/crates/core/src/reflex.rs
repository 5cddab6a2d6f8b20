//! Stretch reflex on muscle tension.
//!
//! Every control tick each muscle compares its tension with the previous
//! tick. A rise larger than `c_stretch` fires the reflex: the reference
//! length of that muscle is contracted by `dl_stretch` at once and released
//! linearly over `dt_loose`. While any muscle of an inhibition group is
//! loosening, no other muscle of that group may fire; muscles that cross the
//! threshold on the same tick all fire together.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigIssue, Error, Result};
use crate::scalar::{c, Real};

/// Slack used when comparing control-tick times against loosening
/// deadlines, so that `t_fired + dt_loose` computed in floating point
/// still lands on the intended tick (s).
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct ReflexParams<T> {
    /// Trigger threshold on the per-tick tension rise (N).
    pub c_stretch: T,
    /// Contraction applied to the reference length (mm).
    pub dl_stretch: T,
    /// Time to release the contraction (s).
    pub dt_loose: T,
    /// Control tick rate for detection (Hz).
    pub rate_hz: T,
    /// Partition of muscle indices into inhibition groups.
    pub groups: Vec<Vec<usize>>,
}

impl<T: Real> ReflexParams<T> {
    /// Defaults used in all experiments: 15 N, 10 mm, 0.5 s at 100 Hz.
    pub fn with_groups(groups: Vec<Vec<usize>>) -> Self {
        Self {
            c_stretch: c(15.0),
            dl_stretch: c(10.0),
            dt_loose: c(0.5),
            rate_hz: c(100.0),
            groups,
        }
    }

    pub fn validate(&self, n_muscles: usize, prefix: &str) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        for (name, v) in [
            ("c_stretch", self.c_stretch),
            ("dl_stretch", self.dl_stretch),
            ("dt_loose", self.dt_loose),
            ("rate_hz", self.rate_hz),
        ] {
            if !(v.is_finite() && v > T::zero()) {
                issues.push(ConfigIssue::new(
                    format!("{prefix}.{name}"),
                    format!("must be finite and > 0 (got {v})"),
                ));
            }
        }
        let mut seen = vec![0usize; n_muscles];
        for (g, members) in self.groups.iter().enumerate() {
            if members.is_empty() {
                issues.push(ConfigIssue::new(format!("{prefix}.groups[{g}]"), "empty group"));
            }
            for &m in members {
                match seen.get_mut(m) {
                    Some(count) => *count += 1,
                    None => issues.push(ConfigIssue::new(
                        format!("{prefix}.groups[{g}]"),
                        format!("muscle {m} out of range (arm has {n_muscles} muscles)"),
                    )),
                }
            }
        }
        let missing: Vec<_> = (0..n_muscles).filter(|&m| seen[m] == 0).collect();
        let repeated: Vec<_> = (0..n_muscles).filter(|&m| seen[m] > 1).collect();
        if !missing.is_empty() || !repeated.is_empty() {
            issues.push(ConfigIssue::new(
                format!("{prefix}.groups"),
                format!(
                    "groups must partition muscles 0..{n_muscles} (missing {missing:?}, repeated {repeated:?})"
                ),
            ));
        }
        issues
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase<T> {
    Idle,
    Loosening { t_fired: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflexEvent<T> {
    pub muscle: usize,
    pub t: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflexState<T> {
    pub phases: Vec<Phase<T>>,
    pub offsets: Vec<T>,
    pub inhibited_until: Vec<Option<T>>,
    group_of: Vec<usize>,
    last_t: Option<T>,
}

impl<T: Real> ReflexState<T> {
    /// Fresh state; `params` must already be validated.
    pub fn new(params: &ReflexParams<T>, n_muscles: usize) -> Self {
        let mut group_of = vec![0; n_muscles];
        for (g, members) in params.groups.iter().enumerate() {
            for &m in members {
                group_of[m] = g;
            }
        }
        Self {
            phases: vec![Phase::Idle; n_muscles],
            offsets: vec![T::zero(); n_muscles],
            inhibited_until: vec![None; params.groups.len()],
            group_of,
            last_t: None,
        }
    }

    pub fn group_of(&self, muscle: usize) -> usize {
        self.group_of[muscle]
    }

    /// One control tick. Returns the muscles that fired on this tick;
    /// [`offsets`](Self::offsets) holds the contraction to subtract from
    /// each commanded reference length.
    pub fn update(
        &mut self,
        tensions_prev: &[T],
        tensions_now: &[T],
        t: T,
        params: &ReflexParams<T>,
    ) -> Result<Vec<ReflexEvent<T>>> {
        let m = self.phases.len();
        if tensions_prev.len() != m || tensions_now.len() != m {
            return Err(Error::InvalidArgument(format!(
                "expected {m} tensions, got {} and {}",
                tensions_prev.len(),
                tensions_now.len()
            )));
        }
        if let Some(last) = self.last_t {
            if t.partial_cmp(&last) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Contract(format!(
                    "reflex ticks must have increasing time (got {t} after {last})"
                )));
            }
        }
        self.last_t = Some(t);
        let eps = c::<T>(TIME_EPS);

        for (phase, offset) in self.phases.iter_mut().zip(self.offsets.iter_mut()) {
            if let Phase::Loosening { t_fired } = *phase {
                let elapsed = t - t_fired;
                if elapsed >= params.dt_loose - eps {
                    *phase = Phase::Idle;
                    *offset = T::zero();
                } else {
                    *offset = params.dl_stretch * (T::one() - elapsed / params.dt_loose);
                }
            }
        }

        // decide from pre-tick state so the result is order-independent
        let blocked: Vec<bool> = self
            .inhibited_until
            .iter()
            .map(|until| matches!(until, Some(u) if t < *u - eps))
            .collect();
        let fired: Vec<usize> = (0..m)
            .filter(|&i| {
                matches!(self.phases[i], Phase::Idle)
                    && !blocked[self.group_of[i]]
                    && detect(tensions_prev[i], tensions_now[i], params.c_stretch)
            })
            .collect();

        for &i in &fired {
            self.phases[i] = Phase::Loosening { t_fired: t };
            self.offsets[i] = params.dl_stretch;
            self.inhibited_until[self.group_of[i]] = Some(t + params.dt_loose);
        }
        Ok(fired.into_iter().map(|muscle| ReflexEvent { muscle, t }).collect())
    }
}

/// Trigger condition: strict rise of more than `c_stretch` between ticks.
#[inline]
pub fn detect<T: Real>(f_prev: T, f_now: T, c_stretch: T) -> bool {
    f_now - f_prev > c_stretch
}

/// Commanded reference lengths with the reflex contraction applied.
pub fn effective_ref<T: Real>(l_ref_commanded: &[T], offsets: &[T]) -> Vec<T> {
    debug_assert_eq!(l_ref_commanded.len(), offsets.len());
    l_ref_commanded
        .iter()
        .zip(offsets)
        .map(|(&l, &o)| l - o)
        .collect()
}

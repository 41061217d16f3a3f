use std::collections::BTreeSet;

use thiserror::Error;

/// One periodic task as seen by the analysis. Times in any consistent unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RtaTask {
    pub budget: u64,
    pub period: u64,
    pub deadline: u64,
    /// Higher number means higher priority.
    pub priority: i64,
}

impl RtaTask {
    /// Implicit deadline (equal to the period).
    pub fn new(budget: u64, period: u64, priority: i64) -> RtaTask {
        RtaTask {
            budget,
            period,
            deadline: period,
            priority,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseTime {
    Bounded(u64),
    /// The iteration passed the deadline; `exceeded_at` is the first iterate
    /// larger than the deadline.
    Unschedulable { exceeded_at: u64 },
}

impl ResponseTime {
    pub fn bounded(self) -> Option<u64> {
        match self {
            ResponseTime::Bounded(r) => Some(r),
            ResponseTime::Unschedulable { .. } => None,
        }
    }

    pub fn is_schedulable(self) -> bool {
        matches!(self, ResponseTime::Bounded(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtaResult {
    /// Same order as the input tasks.
    pub responses: Vec<ResponseTime>,
    /// Index of the highest-priority task that misses its deadline.
    pub first_failure: Option<usize>,
}

impl RtaResult {
    pub fn schedulable(&self) -> bool {
        self.first_failure.is_none()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RtaError {
    #[error("priority {0} assigned to more than one task")]
    DuplicatePriority(i64),
    #[error("task {0} has a zero budget or period")]
    ZeroParameter(usize),
}

/// Worst-case response times under preemptive fixed-priority scheduling.
///
/// Iterates `R <- C_i + sum_{j in hp(i)} ceil(R / T_j) * C_j` from `R = C_i`
/// until a fixpoint or until `R` exceeds the deadline.
pub fn response_time_analysis(tasks: &[RtaTask]) -> Result<RtaResult, RtaError> {
    let mut seen = BTreeSet::new();
    for (i, t) in tasks.iter().enumerate() {
        if t.budget == 0 || t.period == 0 {
            return Err(RtaError::ZeroParameter(i));
        }
        if !seen.insert(t.priority) {
            return Err(RtaError::DuplicatePriority(t.priority));
        }
    }
    let responses: Vec<ResponseTime> = tasks
        .iter()
        .map(|ti| {
            let hp: Vec<&RtaTask> = tasks.iter().filter(|t| t.priority > ti.priority).collect();
            let mut r = ti.budget;
            loop {
                if r > ti.deadline {
                    return ResponseTime::Unschedulable { exceeded_at: r };
                }
                let next = ti.budget
                    + hp
                        .iter()
                        .map(|tj| r.div_ceil(tj.period) * tj.budget)
                        .sum::<u64>();
                if next == r {
                    return ResponseTime::Bounded(r);
                }
                r = next;
            }
        })
        .collect();
    let first_failure = responses
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_schedulable())
        .max_by_key(|(i, _)| tasks[*i].priority)
        .map(|(i, _)| i);
    Ok(RtaResult {
        responses,
        first_failure,
    })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Least common multiple of all periods (1 for an empty set).
pub fn hyperperiod(periods: impl IntoIterator<Item = u64>) -> u64 {
    periods
        .into_iter()
        .fold(1, |acc, p| acc / gcd(acc, p) * p)
}

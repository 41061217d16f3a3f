use std::collections::VecDeque;

use crate::manifest::{ScheduleTable, ScheduledTask};
use crate::model::CpuId;

/// Identifies one periodic activation of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JobId {
    pub task: usize,
    pub release_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecEvent {
    Released(JobId),
    /// First time the job gets the CPU.
    Started(JobId),
    Completed {
        job: JobId,
        completion_us: u64,
        missed: bool,
    },
    /// The job still had work left at `release + deadline`.
    DeadlineMiss { job: JobId, deadline_at_us: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TaskStats {
    pub activations: u64,
    pub completions: u64,
    pub misses: u64,
    pub max_response_us: u64,
}

#[derive(Debug, Clone)]
struct Job {
    id: JobId,
    remaining_us: u64,
    started: bool,
    miss_reported: bool,
}

#[derive(Debug, Clone)]
struct TaskState {
    task: ScheduledTask,
    next_release_us: u64,
    backlog: VecDeque<Job>,
    stats: TaskStats,
}

/// Preemptive fixed-priority executor of one softcore CPU.
///
/// Time only advances through [`SoftcoreExecutor::dispatch`]; the caller
/// must invoke it again no later than the returned instant.
#[derive(Debug, Clone)]
pub struct SoftcoreExecutor {
    cpu: CpuId,
    tasks: Vec<TaskState>,
    running: Option<usize>,
    last_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatch {
    pub events: Vec<ExecEvent>,
    pub next_us: Option<u64>,
}

impl SoftcoreExecutor {
    /// Tasks keep the table order (descending priority); all first releases
    /// are at t = 0.
    pub fn new(table: &ScheduleTable) -> SoftcoreExecutor {
        SoftcoreExecutor {
            cpu: table.cpu,
            tasks: table
                .tasks
                .iter()
                .map(|t| TaskState {
                    task: t.clone(),
                    next_release_us: 0,
                    backlog: VecDeque::new(),
                    stats: TaskStats::default(),
                })
                .collect(),
            running: None,
            last_us: 0,
        }
    }

    pub fn cpu(&self) -> CpuId {
        self.cpu
    }

    pub fn task(&self, i: usize) -> &ScheduledTask {
        &self.tasks[i].task
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn stats(&self, i: usize) -> TaskStats {
        self.tasks[i].stats
    }

    pub fn running(&self) -> Option<usize> {
        self.running
    }

    pub fn task_index(&self, component: &str, thread: &str) -> Option<usize> {
        self.tasks
            .iter()
            .position(|t| t.task.component == component && t.task.thread == thread)
    }

    /// Highest-priority task of `component`.
    pub fn handler_task(&self, component: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.task.component == component)
    }

    pub fn dispatch(&mut self, now_us: u64) -> Dispatch {
        assert!(now_us >= self.last_us, "executor time went backwards");
        let mut events = Vec::new();

        if let Some(r) = self.running {
            let elapsed = now_us - self.last_us;
            let job = self.tasks[r].backlog.front_mut().expect("running job");
            assert!(
                elapsed <= job.remaining_us,
                "dispatch skipped past a completion on cpu {}",
                self.cpu
            );
            job.remaining_us -= elapsed;
            if job.remaining_us == 0 {
                let t = &mut self.tasks[r];
                let job = t.backlog.pop_front().expect("running job");
                let response = now_us - job.id.release_us;
                let missed = response > t.task.deadline_us;
                t.stats.completions += 1;
                t.stats.max_response_us = t.stats.max_response_us.max(response);
                if missed && !job.miss_reported {
                    t.stats.misses += 1;
                }
                events.push(ExecEvent::Completed {
                    job: job.id,
                    completion_us: now_us,
                    missed,
                });
                self.running = None;
            }
        }

        for (i, t) in self.tasks.iter_mut().enumerate() {
            while t.next_release_us <= now_us {
                let id = JobId {
                    task: i,
                    release_us: t.next_release_us,
                };
                t.backlog.push_back(Job {
                    id,
                    remaining_us: t.task.budget_us,
                    started: false,
                    miss_reported: false,
                });
                t.stats.activations += 1;
                events.push(ExecEvent::Released(id));
                t.next_release_us += t.task.period_us;
            }
        }

        for t in &mut self.tasks {
            let deadline = t.task.deadline_us;
            for job in &mut t.backlog {
                let at = job.id.release_us + deadline;
                if !job.miss_reported && at <= now_us {
                    job.miss_reported = true;
                    t.stats.misses += 1;
                    events.push(ExecEvent::DeadlineMiss {
                        job: job.id,
                        deadline_at_us: at,
                    });
                }
            }
        }

        // Tasks are stored in descending priority, so the first ready one wins.
        self.running = self.tasks.iter().position(|t| !t.backlog.is_empty());
        if let Some(r) = self.running {
            let job = self.tasks[r].backlog.front_mut().expect("ready job");
            if !job.started {
                job.started = true;
                events.push(ExecEvent::Started(job.id));
            }
        }
        self.last_us = now_us;

        let mut next = self
            .tasks
            .iter()
            .map(|t| t.next_release_us)
            .min();
        if let Some(r) = self.running {
            let done = now_us + self.tasks[r].backlog[0].remaining_us;
            next = Some(next.map_or(done, |n| n.min(done)));
        }
        for t in &self.tasks {
            for job in &t.backlog {
                if !job.miss_reported {
                    let at = job.id.release_us + t.task.deadline_us;
                    next = Some(next.map_or(at, |n| n.min(at)));
                }
            }
        }
        Dispatch {
            events,
            next_us: next,
        }
    }

    /// Drives the executor alone until `t_end_us` (inclusive) and returns
    /// every event with its time.
    pub fn run_standalone(&mut self, t_end_us: u64) -> Vec<(u64, ExecEvent)> {
        let mut out = Vec::new();
        let mut now = self.last_us;
        loop {
            let d = self.dispatch(now);
            out.extend(d.events.into_iter().map(|e| (now, e)));
            match d.next_us {
                Some(n) if n <= t_end_us => now = n,
                _ => break,
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::ResponseTime;

    fn table(tasks: &[(u64, u64, i64)]) -> ScheduleTable {
        let mut tasks: Vec<ScheduledTask> = tasks
            .iter()
            .enumerate()
            .map(|(i, &(c, t, p))| ScheduledTask {
                component: format!("c{i}"),
                thread: "main".into(),
                period_us: t,
                budget_us: c,
                deadline_us: t,
                priority: p,
                response: None::<ResponseTime>,
            })
            .collect();
        tasks.sort_by_key(|t| std::cmp::Reverse(t.priority));
        ScheduleTable {
            cpu: CpuId::new(0, 0),
            tasks,
        }
    }

    fn completions(ev: &[(u64, ExecEvent)], task: usize) -> Vec<u64> {
        ev.iter()
            .filter_map(|(_, e)| match e {
                ExecEvent::Completed { job, completion_us, .. } if job.task == task => {
                    Some(*completion_us)
                }
                _ => None,
            })
            .collect()
    }

    #[test]
    fn single_task_completions() {
        let mut ex = SoftcoreExecutor::new(&table(&[(200, 1000, 1)]));
        let ev = ex.run_standalone(2500);
        assert_eq!(completions(&ev, 0), vec![200, 1200, 2200]);
    }

    #[test]
    fn rate_monotonic_set_worst_response() {
        let mut ex = SoftcoreExecutor::new(&table(&[
            (1000, 4000, 3),
            (2000, 6000, 2),
            (3000, 12000, 1),
        ]));
        ex.run_standalone(24_000);
        assert_eq!(ex.stats(2).max_response_us, 10_000);
        assert!((0..3).all(|i| ex.stats(i).misses == 0));
    }

    #[test]
    fn overload_misses_at_first_deadline() {
        let mut ex = SoftcoreExecutor::new(&table(&[(3000, 4000, 2), (2000, 5000, 1)]));
        let ev = ex.run_standalone(20_000);
        let first_miss = ev
            .iter()
            .find(|(_, e)| matches!(e, ExecEvent::DeadlineMiss { job, .. } if job.task == 1))
            .map(|(t, _)| *t);
        assert_eq!(first_miss, Some(5000));
    }

    #[test]
    fn preemption_delays_by_remaining_budget() {
        // High (50/300) preempts low (500) at 300; low finishes 50 us late.
        let mut ex = SoftcoreExecutor::new(&table(&[(50, 300, 2), (500, 100_000, 1)]));
        let ev = ex.run_standalone(1000);
        assert_eq!(completions(&ev, 0), vec![50, 350, 650, 950]);
        assert_eq!(completions(&ev, 1), vec![600]);
    }
}

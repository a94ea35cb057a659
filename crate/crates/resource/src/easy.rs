//! EASY backfill: one scheduling pass and a forward replay built on it.
//!
//! The pass starts queued jobs in order while they fit. When the head of
//! the queue does not fit it gets a reservation at the earliest time enough
//! cores are released (assuming running jobs hold their cores until their
//! walltime limit). Later jobs whose queue allows backfilling may start now
//! if they fit in the free cores and either finish before the reservation
//! or only use cores the head will not need at that time.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningJob {
    pub cores: u32,
    pub expected_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitingJob {
    pub cores: u32,
    pub walltime: f64,
    pub backfill: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pass {
    /// Queue positions started this pass, with whether each was a backfill.
    pub started: Vec<(usize, bool)>,
    /// `(queue position, start time)` reserved for the blocked head.
    pub reservation: Option<(usize, f64)>,
}

pub fn easy_pass(now: f64, total_cores: u32, running: &[RunningJob], queue: &[WaitingJob]) -> Pass {
    let used: u64 = running.iter().map(|r| u64::from(r.cores)).sum();
    let mut free = u64::from(total_cores).saturating_sub(used);
    let mut pass = Pass::default();
    let mut profile: Vec<(f64, u64)> = running.iter().map(|r| (r.expected_end, u64::from(r.cores))).collect();

    let mut head = 0;
    while head < queue.len() && u64::from(queue[head].cores) <= free {
        free -= u64::from(queue[head].cores);
        profile.push((now + queue[head].walltime, u64::from(queue[head].cores)));
        pass.started.push((head, false));
        head += 1;
    }
    if head == queue.len() {
        return pass;
    }

    let need = u64::from(queue[head].cores);
    profile.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut avail = free;
    let mut shadow = f64::INFINITY;
    let mut extra = 0u64;
    for (end, cores) in &profile {
        avail += cores;
        if avail >= need {
            shadow = end.max(now);
            extra = avail - need;
            break;
        }
    }
    pass.reservation = Some((head, shadow));

    for (pos, job) in queue.iter().enumerate().skip(head + 1) {
        let cores = u64::from(job.cores);
        if !job.backfill || cores > free {
            continue;
        }
        if now + job.walltime <= shadow {
            free -= cores;
            pass.started.push((pos, true));
        } else if cores <= extra {
            free -= cores;
            extra -= cores;
            pass.started.push((pos, true));
        }
    }
    pass
}

/// Start time of `queue[target]` if nothing else arrives, replaying the
/// queue with every job holding its cores for its full walltime.
pub fn replay_start(now: f64, total_cores: u32, running: &[RunningJob], queue: &[WaitingJob], target: usize) -> f64 {
    assert!(target < queue.len());
    let mut t = now;
    let mut running: Vec<RunningJob> = running.to_vec();
    let mut waiting: Vec<(usize, WaitingJob)> = queue.iter().copied().enumerate().collect();
    loop {
        running.retain(|r| r.expected_end > t);
        let jobs: Vec<WaitingJob> = waiting.iter().map(|(_, w)| *w).collect();
        let pass = easy_pass(t, total_cores, &running, &jobs);
        let mut started: Vec<usize> = pass.started.iter().map(|(p, _)| *p).collect();
        if started.iter().any(|&p| waiting[p].0 == target) {
            return t;
        }
        started.sort_unstable();
        for &p in started.iter().rev() {
            let (_, w) = waiting.remove(p);
            running.push(RunningJob {
                cores: w.cores,
                expected_end: t + w.walltime,
            });
        }
        let next = running
            .iter()
            .map(|r| r.expected_end)
            .filter(|&e| e > t)
            .fold(f64::INFINITY, f64::min);
        if !next.is_finite() {
            // target larger than the machine; callers validate first
            return f64::INFINITY;
        }
        t = next;
    }
}
